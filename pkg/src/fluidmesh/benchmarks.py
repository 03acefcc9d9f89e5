"""Named benchmark cases: planar rectangle and L-shape, cuboid and cylinder."""

import numpy as np

from . import shapes
from .flow import FlowConfig
from .pipeline import Case

RECT_ANCHORS = np.array(
    [
        (0, 0, 0, 10), (100, 0, 0, 10), (100, 50, 0, 10), (0, 50, 0, 10),
        (50, 0, 0, 10), (100, 25, 0, 10), (50, 50, 0, 10), (0, 25, 0, 10),
        (50, 25, 0, 20),
    ],
    dtype=float,
)

L_ANCHORS = np.array(
    [(x, y, 0.0, 10.0) for x, y in shapes.L_POLYGON if (x, y) != shapes.L_CORNER]
    + [(*shapes.L_CORNER, 0.0, 2.0)]
)

CYLINDER_FIXED = np.array([(0.0, 0.0, -20.0), (0.0, 0.0, 0.0), (0.0, 0.0, 20.0)])


def rectangle(seed=0):
    return Case(*shapes.rectangle(), {"h": 10.0}, flow_config=FlowConfig(seed=seed), name="rectangle")


def rectangle_graded(seed=0):
    return Case(*shapes.rectangle(), {"anchors": RECT_ANCHORS}, flow_config=FlowConfig(seed=seed),
                name="rectangle_graded")


def l_shape(seed=0):
    fixed = np.array([(*shapes.L_CORNER, 0.0)])
    return Case(*shapes.l_shape(), {"h": 10.0}, fixed, FlowConfig(seed=seed), name="l_shape")


def l_shape_graded(seed=0):
    fixed = np.array([(*shapes.L_CORNER, 0.0)])
    return Case(*shapes.l_shape(), {"anchors": L_ANCHORS}, fixed, FlowConfig(seed=seed),
                name="l_shape_graded")


def cuboid(seed=0):
    return Case(*shapes.cuboid(), {"h": 20.0}, flow_config=FlowConfig(seed=seed), name="cuboid")


def cylinder(seed=0):
    return Case(*shapes.cylinder(), {"preset": "radial", "params": {"r": 25.0}}, CYLINDER_FIXED,
                FlowConfig(seed=seed), name="cylinder")


CASES = {
    "rectangle": rectangle,
    "rectangle_graded": rectangle_graded,
    "l_shape": l_shape,
    "l_shape_graded": l_shape_graded,
    "cuboid": cuboid,
    "cylinder": cylinder,
}
