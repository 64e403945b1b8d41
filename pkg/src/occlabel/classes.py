"""Occ3D-style semantic class table shared by labeling and evaluation."""

CLASS_NAMES = (
    "others",
    "barrier",
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "traffic_cone",
    "trailer",
    "truck",
    "driveable_surface",
    "other_flat",
    "sidewalk",
    "terrain",
    "manmade",
    "vegetation",
    "free",
)

NUM_CLASSES = len(CLASS_NAMES)  # 18, including free
NUM_SEMANTIC = NUM_CLASSES - 1  # 17 classes a lidar point can carry
FREE = 17

CLASS_ID = {name: i for i, name in enumerate(CLASS_NAMES)}

# Movable agents; barrier and traffic cone stay static.
DEFAULT_DYNAMIC_CLASSES = frozenset(
    CLASS_ID[n]
    for n in (
        "bicycle",
        "bus",
        "car",
        "construction_vehicle",
        "motorcycle",
        "pedestrian",
        "trailer",
        "truck",
    )
)

# Reference class frequencies in percent (semantic classes only), used as
# default weights for the frequency-weighted mIoU.
DEFAULT_CLASS_FREQUENCIES = (
    0.00, 0.03, 0.15, 0.04, 2.82, 0.02, 0.01, 0.10, 0.00,
    0.05, 0.51, 28.45, 0.89, 5.70, 3.11, 40.81, 17.32,
)

SHORT_NAMES = (
    "others", "barrier", "bicycle", "bus", "car", "constr. veh.", "motorcycle",
    "pedestrian", "traffic cone", "trailer", "truck", "driv. surf.", "other flat",
    "sidewalk", "terrain", "manmade", "vegetation", "free",
)

# nuScenes-occupancy visualisation palette, RGB 0-255.
CLASS_COLORS = (
    (0, 0, 0),
    (255, 120, 50),
    (255, 192, 203),
    (255, 255, 0),
    (0, 150, 245),
    (0, 255, 255),
    (200, 180, 0),
    (255, 0, 0),
    (255, 240, 150),
    (135, 60, 0),
    (160, 32, 240),
    (255, 0, 255),
    (139, 137, 137),
    (75, 0, 75),
    (150, 240, 80),
    (230, 230, 250),
    (0, 175, 0),
    (255, 255, 255),
)
