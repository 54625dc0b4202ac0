import numpy as np
import pytest

from sentspace.corpus import TokenizedSentence

S1_TEXT = (
    "But that spasm of irritation by a master intimidator was minor compared "
    "with what Bobby Fischer , the erratic former world chess champion , dished "
    "out in March at a news conference in Reykjavik , Iceland ."
)


@pytest.fixture
def s1():
    tokens = S1_TEXT.split()
    m1 = tokens.index("Reykjavik")
    m2 = tokens.index("Iceland")
    return TokenizedSentence.create("S1", tokens, [m1, m1 + 1], [m2, m2 + 1],
                                    "contains")


def make_blobs(n, centers, sigma, seed):
    """Isotropic Gaussian blobs with round-robin membership."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    labels = np.arange(n) % len(centers)
    x = centers[labels] + sigma * rng.standard_normal((n, centers.shape[1]))
    return x, labels


@pytest.fixture
def blobs():
    return make_blobs


def pytest_terminal_summary(terminalreporter):
    lines = {value for reports in terminalreporter.stats.values() for r in reports
             if getattr(r, "when", None) == "call"
             for key, value in getattr(r, "user_properties", ()) if key == "acceptance"}
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
