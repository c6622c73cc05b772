import pytest

from ultradelta.harness import LayerSpec, SyntheticDeltaSpec, synthetic_checkpoints

# criterion number -> (title, passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))


def small_spec(seed=0, n_layers=6, shape=(32, 48)):
    return SyntheticDeltaSpec(
        tuple(LayerSpec(f"layer{i}.weight", shape, sigma=0.002 * (i + 1)) for i in range(n_layers)),
        seed=seed,
    )


@pytest.fixture
def checkpoints():
    return synthetic_checkpoints(small_spec(), extra=("layer0.bias",))
