import numpy as np
import pytest

from otus import verify
from otus.errors import InvalidArgumentError


def test_parse_spec():
    assert verify.parse_spec("unet-gf8") == ("unet", 8)
    assert verify.parse_spec("patchgan-df16") == ("patchgan", 16)
    assert verify.parse_spec("primitives") == ("primitives", None)
    with pytest.raises(InvalidArgumentError):
        verify.parse_spec("resnet-9")


def test_summarize():
    checks = [verify.Check("s", "a", 0, 1e-4, 1e-3, True), verify.Check("s", "a", 1, 2e-3, 1e-3, False),
              verify.Check("s", "b", 0, 0.0, 1e-9, True)]
    summary = verify.summarize(checks)
    assert summary["a"] == (1, 2, 2e-3)
    assert summary["b"] == (1, 1, 0.0)


def test_primitive_checks_pass():
    checks = verify.primitive_checks(instances=2, seed=1)
    names = {c.name.split("/")[0] for c in checks}
    assert {"conv2d", "batchnorm_train", "maxpool2d", "upsample_nearest", "concat_channels"} <= names
    assert {c.name.split("/")[1] for c in checks} == {"32", "64"}
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_patchgan_checks_pass():
    checks = verify.network_checks("patchgan", 2, instances=2, seed=0)
    assert len(checks) == 4
    assert all(c.passed for c in checks)


def test_ot_checks_pass():
    checks = verify.ot_suite(instances=5, seed=2)
    assert {c.name for c in checks} >= {"nonnegativity", "identity", "symmetry", "triangle", "duality_gap",
                                        "closed_form_1d", "pushforward", "marginals", "joint_bound"}
    assert all(c.passed for c in checks)


def test_pushforward_detects_nothing_on_exact_weights():
    assert verify.pushforward_violations(np.random.default_rng(0)) == 0


def test_ot_deterministic():
    a = [(c.name, c.value) for c in verify.ot_suite(3, seed=7)]
    b = [(c.name, c.value) for c in verify.ot_suite(3, seed=7)]
    assert a == b
