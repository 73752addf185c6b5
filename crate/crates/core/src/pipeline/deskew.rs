use crate::ekf::PoseBuffer;

use super::Scan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeskewStatus {
    Applied,
    /// Scan carries no per-point times.
    NoTimestamps,
    /// Pose history does not span the sweep.
    BufferGap,
    Disabled,
}

/// Expresses every point in the sensor frame at `t_end`:
/// `p' = T(t_end)⁻¹ · T(t_i) · p`.
///
/// Point times are clamped to the sweep. Falls back to the raw cloud, with a
/// warning, when per-point times are missing or the buffer does not span
/// the sweep.
pub fn deskew(scan: &Scan, buffer: &PoseBuffer) -> (Scan, DeskewStatus) {
    let Some(offsets) = scan.offsets.as_ref() else {
        log::warn!(
            "scan at t={:.6}: no per-point times, deskew skipped",
            scan.t_end
        );
        return (scan.clone(), DeskewStatus::NoTimestamps);
    };
    let span = scan.t_end - scan.t_start;
    let late = offsets
        .iter()
        .filter(|&&o| !(o as f64 >= 0.0 && o as f64 <= span + 1e-3))
        .count();
    if late > 0 {
        log::warn!(
            "scan at t={:.6}: {late} point times fall outside the sweep and are clamped",
            scan.t_end
        );
    }
    if !buffer.covers(scan.t_start, scan.t_end) {
        log::warn!(
            "scan at t={:.6}: pose history {:?} does not cover [{:.6}, {:.6}], deskew skipped",
            scan.t_end,
            buffer.span(),
            scan.t_start,
            scan.t_end
        );
        return (scan.clone(), DeskewStatus::BufferGap);
    }
    let end_inv = buffer
        .pose_at(scan.t_end)
        .expect("covered buffer")
        .inverse();
    let mut out = scan.clone();
    // Consecutive points usually share a timestamp within a firing.
    let mut cache: Option<(f32, crate::geometry::Pose)> = None;
    for (p, &o) in out.points.iter_mut().zip(offsets) {
        let rel = match cache {
            Some((co, rel)) if co == o => rel,
            _ => {
                let ti = (scan.t_start + o as f64).clamp(scan.t_start, scan.t_end);
                let pose = buffer.pose_at(ti).expect("covered buffer");
                let rel = end_inv.compose(&pose);
                cache = Some((o, rel));
                rel
            }
        };
        *p = rel.transform_point(p);
    }
    (out, DeskewStatus::Applied)
}
