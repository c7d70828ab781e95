import json
import os
import subprocess
import sys

import numpy as np

from batreg.core import BatteryParams, MarketPrices
from batreg.cost import PowerLawStress
from batreg.offline import OracleConfig, brute_force_offline
from batreg.rainflow import extract_extrema, rainflow_count
from batreg.sim import generate_trace, run_simulation

SCRIPT = r"""
import json, sys
import numpy as np
from batreg._jit import JIT_DISABLED
from batreg.core import BatteryParams, MarketPrices
from batreg.cost import PowerLawStress
from batreg.offline import OracleConfig, brute_force_offline
from batreg.rainflow import extract_extrema, rainflow_count
from batreg.sim import generate_trace, run_simulation
print(json.dumps({"disabled": JIT_DISABLED, **compute()}))
"""


def compute():
    p = BatteryParams.with_round_trip(0.85)
    m = MarketPrices(80, 20)
    phi = PowerLawStress()
    prof = np.cumsum(np.random.default_rng(1).uniform(-0.05, 0.05, 500))
    cs = rainflow_count(extract_extrema(prof)).to_dict()
    rep = run_simulation("threshold", generate_trace(2, 300), 0.5, p, phi, m)
    opt = brute_force_offline(generate_trace(3, 5), p, phi, m, 0.5, OracleConfig(5))
    return {"cycles": cs, "j": rep.breakdown.to_dict(), "soc": rep.soc.e.tolist(),
            "opt": opt.cost.j_total, "acts": (opt.dispatch.c - opt.dispatch.d).tolist()}


def test_interpreted_kernels_agree():
    import inspect
    src = "import numpy as np\n" + inspect.getsource(compute) + SCRIPT
    env = dict(os.environ, BATREG_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", src], env=env, capture_output=True, text=True,
                         check=True).stdout
    plain = json.loads(out)
    assert plain.pop("disabled") is True
    here = json.loads(json.dumps(compute()))
    assert plain == here
