import json
import os
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from gkdv_blowup.grid import PERIODIC, Grid, line_grid
from gkdv_blowup.ground_state import ground_state, soliton_constants
from gkdv_blowup.profiles import build_profiles


@pytest.fixture(scope="session")
def consts():
    return soliton_constants()


@pytest.fixture(scope="session")
def fine_grid():
    return line_grid(-40.0, 40.0, 1.0 / 128.0)


@pytest.fixture(scope="session")
def soliton(fine_grid):
    return ground_state(fine_grid)


@pytest.fixture(scope="session")
def profile_set_k3():
    return build_profiles(3)


@pytest.fixture(scope="session")
def profile_set_k4():
    return build_profiles(4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def acceptance_run(tmp_path_factory):
    """The full production pipeline at its default configuration.

    Expensive (minutes); runs once per session. Point GKDV_TEST_RUNDIR at a
    persistent directory to reuse a finished run across sessions (the
    pipeline is idempotent and skips clean stages).
    """
    from gkdv_blowup.cli import (
        PIPELINE_SCHEMA,
        RunConfig,
        attach_states,
        load_profiles,
        load_trajectory,
        run_pipeline,
        validate_parameters,
    )

    env = os.environ.get("GKDV_TEST_RUNDIR")
    run_dir = Path(env) if env else tmp_path_factory.mktemp("acceptance-run")
    params = validate_parameters({}, PIPELINE_SCHEMA)
    cfg = RunConfig("pipeline", params, run_dir)
    run_pipeline(cfg, echo=lambda *_: None)

    ps = load_profiles(run_dir / "profiles")
    meta = json.loads((run_dir / "initdata" / "initdata.json").read_text())
    xgrid = Grid(params["domain_left"], params["domain_right"],
                 int(round((params["domain_right"] - params["domain_left"])
                           / params["spacing"])), PERIODIC)
    traj = load_trajectory(run_dir / "evolve", xgrid)
    states_data = json.loads((run_dir / "decompose" / "states.json").read_text())
    attach_states(traj, states_data, ps, params["gamma"])
    report = json.loads((run_dir / "verify" / "report.json").read_text())
    checks = {c["name"]: c for c in
              json.loads((run_dir / "verify" / "checks.json").read_text())}
    return SimpleNamespace(run_dir=run_dir, params=params, ps=ps, meta=meta,
                           traj=traj, states_data=states_data, report=report,
                           checks=checks)
