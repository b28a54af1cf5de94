import numpy as np
import pytest

from savehr.cohort import N_AGE_BINS, N_GENDER, N_RACE, PatientTensor


def random_tensors(n, n_codes, seed=0, density=0.25, max_count=3):
    """Random patients with both labels present."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        counts = rng.integers(1, max_count + 1, size=(4, n_codes)) * (rng.random((4, n_codes)) < density)
        out.append(
            PatientTensor(
                patient_id=f"R{i:03d}",
                label=int(i % 2),
                gender=int(rng.integers(N_GENDER)),
                race=int(rng.integers(N_RACE)),
                age_bin=int(rng.integers(N_AGE_BINS)),
                quarter_counts=counts.astype(np.int64),
            )
        )
    return out


@pytest.fixture
def toy_tensors():
    return random_tensors(6, 12, seed=3)


@pytest.fixture
def toy_vocab():
    return [f"C{i:03d}" for i in range(12)]


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
