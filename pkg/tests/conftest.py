import pytest

from bonemc import build_ctmc, parse_model, resolve_constants
from bonemc.data import bone_model_path

HEALTHY = {"aging": 1, "rankLrate": 0.1}
OSTEOPOROTIC = {"aging": 2, "rankLrate": 0.2}

# Minimal two-state chain with one rewarded transition; analytic results
# are available in closed form for rate lam and per-firing reward.
TWO_STATE = """\
const double lam = 1;
module chain
x:[0..1] init 0;
[hit] x=0 -> lam:(x'=1);
endmodule
rewards "bonus"
[hit] true:2;
endrewards
"""


@pytest.fixture(scope="session")
def bone_ast():
    return parse_model(bone_model_path().read_text())


@pytest.fixture(scope="session")
def healthy_ctmc(bone_ast):
    return build_ctmc(resolve_constants(bone_ast, HEALTHY))


@pytest.fixture(scope="session")
def sick_ctmc(bone_ast):
    return build_ctmc(resolve_constants(bone_ast, OSTEOPOROTIC))


@pytest.fixture(scope="session")
def two_state_ctmc():
    return build_ctmc(resolve_constants(parse_model(TWO_STATE)))
