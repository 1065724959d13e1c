import dataclasses

from mompc.dynamics import BallAroundEquilibrium


def ball_variant(bench, radius):
    """Model and objectives of ``bench`` with a ball terminal set of the given radius."""
    model = dataclasses.replace(bench.model, terminal_set=BallAroundEquilibrium(radius))
    return model, dataclasses.replace(bench.objectives, model=model)
