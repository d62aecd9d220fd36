"""Closed-loop lifestyle simulation toolkit.

Event timelines from multiple lifelog streams feed a personal habit
model and a risk predictor; a persuasion-aware recommender turns those
into threshold-gated suggestions, and a synthetic patient closes the
loop so interventions can be compared against a placebo arm.
"""

__version__ = "0.1.0"
