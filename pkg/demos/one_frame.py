"""Walk through a few frames of the network by hand.

Each frame the gateway picks how many busy slots the transmitters harvest or
backscatter in, how many idle slots they transmit actively, which chain to use
and which fee interval to bid. The delivered data becomes one transaction.
"""
import numpy as np

from chainscatter.config import paper_preset
from chainscatter.mdp import Environment, fee_rate

cfg = paper_preset()
env = Environment(cfg.radio, cfg.chain, np.random.default_rng(1))
state = env.reset()
print(f"{len(env.table)} actions in the table; feature width {env.encode().size}\n")

for frame in range(5):
    feasible = np.flatnonzero(env.mask())
    # Backscatter in every busy slot, then use the idle slots actively, on chain 0 at fee interval 2.
    n = cfg.radio.num_transmitters
    back = [state.busy // n + (i < state.busy % n) for i in range(n)]
    idle = cfg.radio.frame_slots - state.busy
    act = [idle // n + (i < idle % n) for i in range(n)]
    index = env.table.index_of([0] + back + act, chain=0, fee_index=2)
    assert index in feasible
    res = env.step(index)
    queues = [t.queue for t in res.next_state.transmitters]
    energy = [t.energy for t in res.next_state.transmitters]
    print(f"frame {frame}: busy={state.busy} backscatter={back} active={act} "
          f"delivered={res.info['delivered']} included={res.info['included']} "
          f"stored={res.info['stored']} fee={res.info['fee_charged']:.3f} reward={res.reward:.3f}")
    print(f"          queues={queues} energy={energy} bid={fee_rate(2, cfg.chain):.4f}/unit")
    state = res.next_state
