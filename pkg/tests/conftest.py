import numpy as np
import pytest

from hob2srnn.kernel import SeededRng, finite_diff_grad
from hob2srnn.model import Hob2srnnModel, ModelConfig


@pytest.fixture
def rng():
    return SeededRng(1234)


def small_model(attention_mode="tanh", source="both", enrich=True, seed=3,
                class_counts=(3,), hidden=8, candidate_raw_input=False):
    # With enrich=False the per-branch enriched width falls back to the
    # channel count, so u2 here is ignored in that case.
    cfg = ModelConfig(
        c_rad=2, c_opt=5, class_counts=list(class_counts), u1=4, u2=6,
        hidden=hidden, dropout=0.0, attention_mode=attention_mode,
        enrich=enrich, candidate_raw_input=candidate_raw_input, source=source,
    )
    return Hob2srnnModel(cfg, SeededRng(seed))


def small_batch(seed=5, batch=2, t_rad=4, t_opt=5):
    r = SeededRng(seed)
    xr = r.normal(0, 1, (batch, t_rad, 2))
    xo = r.normal(0, 1, (batch, t_opt, 5))
    y = r.integers(0, 3, batch)
    return xr, xo, y


def max_grad_error(analytic, numeric):
    """Worst relative error; tiny gradients compared against a 1e-3 floor."""
    worst = 0.0
    for name in numeric:
        a, b = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def check_model_gradients(model, xr, xo, y, level=0, h=1e-5):
    result = model.forward_batch(xr, xo, y, level)
    analytic = model.gradients(result)
    params = model.parameters(level)
    numeric = finite_diff_grad(
        lambda: model.forward_batch(xr, xo, y, level).loss.value[0, 0], params, h)
    return max_grad_error(analytic, numeric)
