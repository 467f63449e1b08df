"""Parameter sweeps over the simulator, one CSV per table or figure family."""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from dualchain.config import RunConfig, from_mapping, tomllib
from dualchain.domain import MB


@dataclass(frozen=True)
class Sweep:
    name: str
    base: Mapping[str, Any] = field(default_factory=dict)
    # each group is a list of cells; cells of different groups combine as a product
    groups: tuple[tuple[Mapping[str, Any], ...], ...] = ()

    def cells(self) -> list[dict[str, Any]]:
        if not self.groups:
            return [dict(self.base)]
        out = []
        for combo in itertools.product(*self.groups):
            cell = dict(self.base)
            for part in combo:
                cell.update(part)
            out.append(cell)
        return out

    @classmethod
    def from_mapping(cls, d: Mapping[str, Any]) -> "Sweep":
        groups = []
        for key, values in d.get("grid", {}).items():
            groups.append(tuple({key: v} for v in values))
        for cells in d.get("cells", []):
            groups.append(tuple(cells))
        return cls(d.get("name", "sweep"), d.get("base", {}), tuple(groups))

    @classmethod
    def load(cls, path: str | Path) -> "Sweep":
        p = Path(path)
        data = tomllib.loads(p.read_text()) if p.suffix == ".toml" else json.loads(p.read_text())
        return cls.from_mapping(data)


def _cells(key: str, values: Iterable[Any]) -> tuple[dict[str, Any], ...]:
    return tuple({key: v} for v in values)


PRESETS: dict[str, Sweep] = {
    "table3_4": Sweep(
        "table3_4",
        {"contracts": 16_000},
        (
            ({"mode": "base"},)
            + tuple({"mode": "chainboost", "sc_block_bytes": int(x * MB)} for x in (0.5, 1.0, 1.5, 2.0)),
        ),
    ),
    "table5": Sweep(
        "table5",
        {"contracts": 8_000, "nodes": 200, "sc_block_bytes": MB},
        (
            tuple({"mode": "base", "modality": m} for m in ("contract_end", "epoch_end", "each_mc_round"))
            + tuple({"mode": "chainboost", "modality": m} for m in ("contract_end", "epoch_end")),
        ),
    ),
    "table6": Sweep(
        "table6",
        {"contracts": 16_000, "sc_block_bytes": MB // 2},
        (_cells("mode", ("chainboost", "opboost")),),
    ),
    "fig10": Sweep(
        "fig10",
        {"sc_block_bytes": MB},
        (_cells("mode", ("base", "chainboost")), _cells("contracts", (2_000, 4_000, 8_000, 16_000, 32_000, 64_000))),
    ),
    "fig11": Sweep(
        "fig11",
        {"mode": "chainboost", "sc_block_bytes": MB},
        (
            _cells("contracts", (8_000, 16_000, 32_000)),
            # 30..100 sc-rounds in a 10 mc-round epoch
            _cells("sc_rounds_per_mc_round", (3, 4, 6, 8, 10)),
        ),
    ),
    "fig12": Sweep(
        "fig12",
        {"contracts": 16_000, "sc_block_bytes": MB},
        (_cells("mode", ("base", "chainboost")), _cells("payment_fraction", (0.02, 0.10, 0.30, 0.50, 0.70, 0.90))),
    ),
}


METRIC_COLUMNS = (
    "throughputPerMcRound",
    "mcThroughput",
    "scThroughput",
    "mcLatency",
    "scLatency",
    "confirmationTimeMcRounds",
    "finalityMcRounds",
    "mainBytes",
    "sideBytes",
    "prunedBytes",
    "servicedContractsPerRound",
    "rounds",
    "takeovers",
    "autorecoveryFailures",
)


def run_cell(cell: Mapping[str, Any], base: Optional[RunConfig] = None) -> dict[str, Any]:
    from dualchain.simulation import run_simulation

    cfg = from_mapping(cell, base)
    cfg.validate()
    m = run_simulation(cfg).metrics.to_dict()
    row = dict(cell)
    row.update({k: m[k] for k in METRIC_COLUMNS if k in m})
    row["mainBytes"] = m["chainBytes"]["main"]
    row["sideBytes"] = m["chainBytes"]["side"]
    row["prunedBytes"] = m["chainBytes"]["pruned"]
    return row


def run_campaign(
    sweep: Sweep, out_dir: Optional[str | Path] = None, workers: int = 1, base: Optional[RunConfig] = None
) -> list[dict[str, Any]]:
    """Run every cell; independent cells may run in worker processes."""
    cells = sweep.cells()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells, [base] * len(cells)))
    else:
        rows = [run_cell(c, base) for c in cells]
    if out_dir is not None:
        write_csv(Path(out_dir) / f"{sweep.name}.csv", rows)
    return rows


def write_csv(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    keys: list[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)
