use crate::geometry::Pose;

/// Pose at which the map was updated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub t: f64,
    /// Registered pose the cloud was inserted with.
    pub pose: Pose,
    /// Inertial prediction that triggered the keyframe.
    pub trigger: Pose,
}

/// True when `current` has moved more than `t_th` meters or turned more
/// than `q_th` degrees relative to `last_keyframe`.
pub fn keyframe_due(current: &Pose, last_keyframe: &Pose, t_th: f64, q_th: f64) -> bool {
    let rel = last_keyframe.between(current);
    rel.t.norm() > t_th || rel.rotation_angle().to_degrees() > q_th
}
