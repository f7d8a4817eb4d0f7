SCHEMA_VERSION = 1

TABLE_HEIGHT = 0.0
# Depth reported for rays that never meet the table plane.
MAX_DEPTH = 10.0

METHODS = ("xpg", "fixed_threshold", "flat_policy", "no_nbv")
LEARNED_METHODS = ("xpg", "flat_policy", "no_nbv")
SCENE_FAMILIES = ("random", "occluded")

# Action tags, in priority order. Index order is also the flat policy's logit order.
GRASP_TARGET = "grasp_target"
REMOVE_OCCLUDER = "remove_occluder"
MOVE_VIEW = "move_view"
ACTION_TAGS = (GRASP_TARGET, REMOVE_OCCLUDER, MOVE_VIEW)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_INTEGRITY = 3
