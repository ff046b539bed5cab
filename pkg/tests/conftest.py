"""Shared fixtures: the worked tree example and its hand-derived values."""

import math

import pytest

from icfhi import QualifierRecord, build_tree, make_spec, parse_code

# gamma giving a 30-day-old qualifier one third of its weight
GAMMA_THIRD_30 = (1.0 / 3.0) ** (1.0 / 30.0)
GAMMA_TWENTIETH_30 = (1.0 / 20.0) ** (1.0 / 30.0)

# Hand-derived values for the worked example (computed independently with a
# spreadsheet-style calculation before the engine existed):
#   parent node carries (1, age 0, r 1.0) and (0, age 15, r 0.9); one child
#   carries (2, age 0, r 1.0) plus a shared-source (1, age 30, r 0.8); the
#   sibling child carries the same shared source answer, so both copies get
#   uniqueness 1/2.  With gamma = (1/3)**(1/30):
#     weights: 1, 0.9/sqrt(3), 1, 2/15, 2/15          (sum 2.78628190893733)
#     value  : 49 / (34 + 13.5/sqrt(3))               = 1.1724106796905387
#     alpha  : (1 + 0.3 + 1 + 2/45 + 2/45) / sum      = 0.8573751569165503
#     rel    : (1 + 0.46761.. + 1 + 2*0.10666..)/sum  = 0.9622095462692938
#   the node is the only data-bearing branch, so the root raw equals it and
#   the index is nint(100 - 25 * 1.17241068) = nint(70.6897) = 71.
WORKED_NODE_X = 49.0 / (34.0 + 13.5 / math.sqrt(3.0))
WORKED_NODE_ALPHA = 0.8573751569165503
WORKED_NODE_R = 0.9622095462692938
WORKED_HI = 71


def worked_example_records():
    return [
        QualifierRecord("p", 30, "srcA", parse_code("b28010"), 2.0, 1.0),
        QualifierRecord("p", 0, "srcB", parse_code("b28010"), 1.0, 0.8),
        QualifierRecord("p", 0, "srcB", parse_code("b28013"), 1.0, 0.8),
        QualifierRecord("p", 30, "srcC", parse_code("b2801"), 1.0, 1.0),
        QualifierRecord("p", 15, "srcD", parse_code("b2801"), 0.0, 0.9),
    ]


@pytest.fixture
def worked_records():
    return worked_example_records()


@pytest.fixture
def worked_tree(worked_records):
    return build_tree({r.code for r in worked_records})


@pytest.fixture
def linear_spec_third():
    """Linear curve with the one-third-over-30-days decay."""
    return make_spec(2.0, GAMMA_THIRD_30)
