import sys
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from uwocsim.fading.distributions import WGGParams  # noqa: E402

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# WGG rows of the Pacific, d_L = 10 m, D_a = 6 cm block (d_T = 50, 500, 1000 m)
TABLE3_WGG = (
    WGGParams(0.7531, 19.581, 1.029, 1.014, 12.0169, 23.8298),
    WGGParams(0.7212, 22.932, 0.991, 1.109, 16.243, 34.693),
    WGGParams(0.4215, 41.982, 1.002, 1.0242, 16.245, 28.132),
)


@pytest.fixture(scope="session")
def builtin_profile_path() -> Path:
    return Path(str(resources.files("uwocsim") / "data" / "profiles" / "synthetic_pacific.csv"))


@pytest.fixture
def table3_wgg():
    return TABLE3_WGG
