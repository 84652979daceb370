from .skeleton import (
    Skeleton,
    default_humanoid,
    forward_kinematics,
    fk_local,
    apply_root_transform,
)
from .sequence import (
    MotionSequence,
    KeyframeSpec,
    DatasetStats,
    feature_layout,
    feature_dim,
    pose_dim,
    pose_features,
    central_diff,
    angular_velocity,
    joint_jerk_magnitudes,
    validate_consistency,
    random_keyframe_indices,
    startend_keyframe_indices,
    even_keyframe_indices,
    bernoulli_keyframe_mask,
)
from .synth import (
    FamilyRanges,
    WalkParams,
    ReachParams,
    generate_walk,
    generate_reach,
    generate_synthetic_dataset,
    walk_speed_profile,
    walk_heading,
)
from .io import (
    SchemaError,
    read_motion,
    write_motion,
    read_keyframes,
    write_keyframes,
    read_dataset,
    write_dataset,
)

__all__ = [n for n in dir() if not n.startswith("_")]
