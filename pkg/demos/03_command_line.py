"""Drive a run from an INI file through the command line entry point.

Everything is written to a temporary directory, and the finished run is
checked with ``verify``.
"""

# %%
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG = """
[domain]
Mx = 4
My = 4
K = 4

[integrator]
dt = 1e-3
T_end = 0.1
diag_every = 5

[initial]
profile = random
amplitude = 0.2
seed = 2

[output]
directory = run
q_list = 2,4
"""


def hydroprim(*args):
    proc = subprocess.run([sys.executable, "-m", "hydroprim", *args],
                          capture_output=True, text=True)
    print(f"$ hydroprim {' '.join(args)}  -> exit {proc.returncode}")
    print(proc.stdout or proc.stderr)
    return proc.returncode


# %%
with tempfile.TemporaryDirectory() as tmp:
    ini = Path(tmp) / "demo.ini"
    ini.write_text(CONFIG)
    hydroprim("simulate", "--config", str(ini))
    print("files:", sorted(p.name for p in (Path(tmp) / "run").iterdir()))
    hydroprim("verify", "--config", str(ini), "--checks", "energy,cancellation,kinematics")

    # a configuration error lists every problem and exits with code 4
    ini.write_text(CONFIG.replace("Mx = 4", "Mx = 4\nNq_x = 3"))
    hydroprim("basis", "--config", str(ini))
