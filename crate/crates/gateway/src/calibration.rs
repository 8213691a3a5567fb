//! Mapping tracked 3D controller positions onto the elbow angle.

use std::fs;
use std::path::Path;

use crate::wire::{self, ErrCode, Message, WireError};

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

/// Forearm arc: elbow pivot, direction of 0°, and the normal of the plane
/// the forearm sweeps. Positive angles turn from `axis` toward
/// `normal × axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcCalibration {
    pub pivot: V3,
    pub axis: V3,
    pub normal: V3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReading {
    /// Degrees, within `[0, rom]`.
    pub angle: f64,
    /// Unclamped planar angle in `[0, 360)`.
    pub raw_angle: f64,
    /// `| |projection| - radius |`, metres.
    pub radial_deviation: f64,
}

impl ArcCalibration {
    pub fn new(pivot: V3, axis: V3, normal: V3, radius: f64) -> Result<Self, WireError> {
        let finite = pivot.iter().chain(&axis).chain(&normal).all(|v| v.is_finite());
        if !finite || !(radius.is_finite() && radius > 0.0) {
            return Err(WireError::bad("calibration needs finite vectors and radius > 0"));
        }
        for (name, v) in [("axis", axis), ("normal", normal)] {
            if (norm(v) - 1.0).abs() > 1e-6 {
                return Err(WireError::bad(format!("{name} must be a unit vector")));
            }
        }
        if dot(axis, normal).abs() > 1e-6 {
            return Err(WireError::bad("axis must be perpendicular to the plane normal"));
        }
        Ok(Self { pivot, axis, normal, radius })
    }

    pub fn from_message(msg: &Message) -> Result<Self, WireError> {
        match *msg {
            Message::Cal { pivot, axis, normal, radius } => Self::new(pivot, axis, normal, radius),
            _ => Err(WireError::bad("not a CAL message")),
        }
    }

    pub fn to_message(&self) -> Message {
        Message::Cal { pivot: self.pivot, axis: self.axis, normal: self.normal, radius: self.radius }
    }

    /// Stores the calibration as a single CAL line.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, wire::serialize(&self.to_message()))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let invalid = |e: WireError| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string());
        Self::from_message(&wire::parse(text.trim_end()).map_err(invalid)?).map_err(invalid)
    }

    /// Point on the arc at `angle_deg`.
    pub fn point_at(&self, angle_deg: f64) -> V3 {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let side = cross(self.normal, self.axis);
        let dir = [
            c * self.axis[0] + s * side[0],
            c * self.axis[1] + s * side[1],
            c * self.axis[2] + s * side[2],
        ];
        [self.pivot[0] + self.radius * dir[0], self.pivot[1] + self.radius * dir[1], self.pivot[2] + self.radius * dir[2]]
    }
}

/// Projects `p` onto the arc plane and measures its angle from the start
/// axis. Angles past the range of motion snap to whichever bound is closer
/// around the circle, so a slight overshoot below 0° reads as 0°, not ROM.
pub fn angle_from_position(p: V3, cal: &ArcCalibration, rom_deg: f64) -> Result<AngleReading, WireError> {
    let d = sub(p, cal.pivot);
    let proj = sub(d, scale(cal.normal, dot(d, cal.normal)));
    let len = norm(proj);
    if len < 1e-9 {
        return Err(WireError::new(ErrCode::Degenerate, "position projects onto the pivot"));
    }
    let side = cross(cal.normal, cal.axis);
    let mut raw = dot(proj, side).atan2(dot(proj, cal.axis)).to_degrees();
    if raw < 0.0 {
        raw += 360.0;
    }
    if raw >= 360.0 {
        raw -= 360.0;
    }
    let angle = if raw <= rom_deg {
        raw
    } else if raw - rom_deg < 360.0 - raw {
        rom_deg
    } else {
        0.0
    };
    Ok(AngleReading { angle, raw_angle: raw, radial_deviation: (len - cal.radius).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> ArcCalibration {
        ArcCalibration::new([0.1, 0.2, 0.3], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.3).unwrap()
    }

    #[test]
    fn axis_reads_zero_and_quarter_turn_reads_ninety() {
        let c = cal();
        let zero = angle_from_position([0.4, 0.2, 0.3], &c, 120.0).unwrap();
        assert!(zero.angle.abs() < 1e-12 && zero.radial_deviation < 1e-12);
        let ninety = angle_from_position([0.1, 0.5, 0.3], &c, 120.0).unwrap();
        assert!((ninety.angle - 90.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_plane_offset_is_ignored() {
        let c = cal();
        let r = angle_from_position([0.1, 0.5, 0.9], &c, 120.0).unwrap();
        assert!((r.angle - 90.0).abs() < 1e-9);
    }

    #[test]
    fn pivot_is_degenerate() {
        let e = angle_from_position([0.1, 0.2, 0.3], &cal(), 120.0).unwrap_err();
        assert_eq!(e.code, ErrCode::Degenerate);
        let above = angle_from_position([0.1, 0.2, 0.8], &cal(), 120.0).unwrap_err();
        assert_eq!(above.code, ErrCode::Degenerate);
    }

    #[test]
    fn overshoot_snaps_to_nearest_bound() {
        let c = cal();
        assert_eq!(angle_from_position(c.point_at(-5.0), &c, 120.0).unwrap().angle, 0.0);
        assert_eq!(angle_from_position(c.point_at(130.0), &c, 120.0).unwrap().angle, 120.0);
    }

    #[test]
    fn arc_points_round_trip() {
        let c = ArcCalibration::new([0.0; 3], [0.0, 0.6, 0.8], [0.0, 0.8, -0.6], 0.25).unwrap();
        for deg in [0.0, 12.5, 45.0, 90.0, 119.0] {
            let r = angle_from_position(c.point_at(deg), &c, 120.0).unwrap();
            assert!((r.angle - deg).abs() < 1e-9, "{deg} -> {}", r.angle);
        }
    }

    #[test]
    fn rejects_skewed_frames() {
        assert!(ArcCalibration::new([0.0; 3], [1.0, 0.0, 0.0], [0.6, 0.8, 0.0], 0.3).is_err());
        assert!(ArcCalibration::new([0.0; 3], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.3).is_err());
        assert!(ArcCalibration::new([0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.0).is_err());
    }
}
