"""Small builders shared by the unit tests."""

from dualchain import mainchain as mc
from dualchain.domain import HomeChain, Ledger, NodeId, SummaryState, SyncPayload, TxKind, make_tx


def main_state(miners=4, k_conf=6, **kw):
    power = {NodeId(i): 1.0 for i in range(miners)}
    return mc.MainchainState(Ledger(HomeChain.MAIN, k_conf), power, **kw)


def mine(state, round_no=0, capacity=1 << 20, verify=None):
    leader = mc.select_round_leader(state, mc.SortitionSeed.from_block(state.ledger.tip))
    block = mc.assemble_main_block(state, capacity, leader, round_no, verify)
    paid = mc.apply_main_block(state, block)
    return block, paid


def sync_tx(tx_id, epoch, proofs, ref=b"\x01" * 32, attested=False, payments=None):
    payload = SyncPayload(((epoch, ref),), SummaryState(proofs, payments or {}), attested)
    return make_tx(tx_id, TxKind.SYNC, payload)
