"""Small deterministic workload; prints JSON.  Run under either backend."""
import hashlib
import json

import numpy as np

from gwtree import BACKEND, mcmc, oracle, phase, recursion
from gwtree.model import two_class_params


def probe():
    P = (0.4, 0.3, 0.3)
    lin = recursion.run(P, 1.2, 20, recursion.BLOCKS)
    lg = recursion.run([0.0, 0.9, 0.1], 1.1, 60, recursion.BLOCKS, logspace=True)
    prm = two_class_params(P, 1.7, 2, 2)
    chain = mcmc.sample_chain(mcmc.ChainConfig(prm, steps=3000, seed=5, thin=3))
    glob = mcmc.sample_chain(mcmc.ChainConfig(prm, kind="global", steps=1000, seed=5))
    return {
        "backend": BACKEND,
        "linear": lin.data.tolist(),
        "log": lg.data.tolist(),
        "stream": oracle.stream_partition_function(prm, 0.9, 1.1),
        "count": int(oracle.enumerate_spins(2, 2).shape[0]),
        "local": hashlib.sha256(chain.states.tobytes()).hexdigest(),
        "local_accepted": chain.accepted,
        "global": hashlib.sha256(glob.states.tobytes()).hexdigest(),
        "classify": phase.classify(P, 1.03, n_max=100_000, tol=1e-10),
        "approach": phase.approach_fixed_point([0.5, 0.3, 0.2], 1.2, (1.0795804687, 1.1307217343),
                                               1e-6, 10_000).steps,
    }


if __name__ == "__main__":
    print(json.dumps(probe()))
