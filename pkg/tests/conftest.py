import pytest

from driftmon.stream import StreamEvent


class ListLabels:
    """Label source over a list of outcomes, advanced by the test."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.t = 0
        self.calls = []

    def request(self):
        self.calls.append(self.t)
        return self.outcomes[self.t]


def drive(step, state, outcomes, signals=None):
    """Run a step function over outcomes; return (queries, estimates, actions)."""
    labels = ListLabels(outcomes)
    actions = []
    for t in range(len(outcomes)):
        labels.t = t
        g = 0.0 if signals is None else signals[t]
        actions.append(step(state, labels, g))
    return [int(a.query) for a in actions], [a.estimate for a in actions], actions


@pytest.fixture
def make_events():
    def _make(outcomes, confidence=0.5, mu=None):
        return [
            StreamEvent(t, int(o), confidence, None, None if mu is None else mu[t])
            for t, o in enumerate(outcomes)
        ]

    return _make
