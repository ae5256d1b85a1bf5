//! Tilt angles, rotation matrices, sphere/equirectangular projection and
//! the angular error metric.
//!
//! Convention (shared by every module): world axes x-forward / y-left /
//! z-up; pitch rotates about the y-axis, roll about the x-axis, and the
//! combined tilt is `R = R_roll * R_pitch`. Pixels use the pixel-center
//! (`+0.5`) convention so the sample grid is symmetric about the equator.

use crate::error::UprightError;
use std::f64::consts::PI;

/// Camera tilt: pitch and roll in degrees, both within `[-90, 90]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltAngles {
    pitch: f64,
    roll: f64,
}

impl TiltAngles {
    pub fn new(pitch: f64, roll: f64) -> Result<Self, UprightError> {
        if !pitch.is_finite() || !(-90.0..=90.0).contains(&pitch) {
            return Err(UprightError::AngleOutOfRange { name: "pitch", value: pitch });
        }
        if !roll.is_finite() || !(-90.0..=90.0).contains(&roll) {
            return Err(UprightError::AngleOutOfRange { name: "roll", value: roll });
        }
        Ok(TiltAngles { pitch, roll })
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn roll(&self) -> f64 {
        self.roll
    }

    pub fn is_zero(&self) -> bool {
        self.pitch == 0.0 && self.roll == 0.0
    }
}

/// 3x3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    pub fn mul_mat(&self, rhs: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        RotationMatrix { m: out }
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1] + self.m[0][2] * v[2],
            self.m[1][0] * v[0] + self.m[1][1] * v[1] + self.m[1][2] * v[2],
            self.m[2][0] * v[0] + self.m[2][1] * v[1] + self.m[2][2] * v[2],
        ]
    }

    pub fn transpose(&self) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        RotationMatrix { m: out }
    }

    /// Largest element of `|R^T R - I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let rt = self.transpose();
        let p = rt.mul_mat(self);
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.m[i][j] - expect).abs());
            }
        }
        worst
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Unit-norm direction on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector {
    v: [f64; 3],
}

impl UnitVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, UprightError> {
        let n = (x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(UprightError::ZeroVector);
        }
        Ok(UnitVector { v: [x / n, y / n, z / n] })
    }

    pub fn from_rotated(r: &RotationMatrix, v: UnitVector) -> UnitVector {
        let w = r.mul_vec(v.v);
        // rotation preserves the norm
        UnitVector { v: w }
    }

    pub fn x(&self) -> f64 {
        self.v[0]
    }
    pub fn y(&self) -> f64 {
        self.v[1]
    }
    pub fn z(&self) -> f64 {
        self.v[2]
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.v[0] * other.v[0] + self.v[1] * other.v[1] + self.v[2] * other.v[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Equirectangular image geometry: `width = 2 * height`, `height >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquirectGrid {
    height: usize,
    width: usize,
}

impl EquirectGrid {
    pub fn new(height: usize, width: usize) -> Result<Self, UprightError> {
        if height < 2 || width != 2 * height {
            return Err(UprightError::InvalidGrid { height, width });
        }
        Ok(EquirectGrid { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Rotation matrix for a tilt: `R = R_roll(x) * R_pitch(y)`.
pub fn rotation_from_tilt(angles: TiltAngles) -> RotationMatrix {
    let p = angles.pitch().to_radians();
    let r = angles.roll().to_radians();
    let (sp, cp) = p.sin_cos();
    let (sr, cr) = r.sin_cos();
    let pitch = RotationMatrix { m: [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]] };
    let roll = RotationMatrix { m: [[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]] };
    roll.mul_mat(&pitch)
}

/// Image of the zenith under the tilt: `v = R(p, r) * (0, 0, 1)`.
pub fn orientation_vector(angles: TiltAngles) -> UnitVector {
    let r = rotation_from_tilt(angles);
    let w = r.mul_vec([0.0, 0.0, 1.0]);
    UnitVector { v: w }
}

/// Angle in degrees between the two orientation vectors, in `[0, 180]`.
pub fn angle_error(a: TiltAngles, b: TiltAngles) -> f64 {
    let va = orientation_vector(a);
    let vb = orientation_vector(b);
    va.dot(&vb).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Direction of the pixel center `(u, v)`:
/// longitude `phi = 2*pi*(u + 0.5)/W - pi`, latitude `theta = pi/2 - pi*(v + 0.5)/H`.
pub fn pixel_to_sphere(u: f64, v: f64, grid: EquirectGrid) -> Result<UnitVector, UprightError> {
    let (h, w) = (grid.height() as f64, grid.width() as f64);
    if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
        return Err(UprightError::PixelOutOfGrid { u, v, height: grid.height(), width: grid.width() });
    }
    let phi = 2.0 * PI * (u + 0.5) / w - PI;
    let theta = PI / 2.0 - PI * (v + 0.5) / h;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Ok(UnitVector { v: [ct * cp, ct * sp, st] })
}

/// Continuous pixel coordinates of a direction; inverse of [`pixel_to_sphere`].
///
/// x wraps into `[0, W)`; y is clamped into `[0, H-1]` only where `asin`
/// saturates at the poles. At the poles longitude is undefined and x is
/// fixed to 0.
pub fn sphere_to_pixel(dir: UnitVector, grid: EquirectGrid) -> (f64, f64) {
    let (h, w) = (grid.height() as f64, grid.width() as f64);
    let z = dir.z().clamp(-1.0, 1.0);
    let theta = z.asin();
    let y = ((PI / 2.0 - theta) * h / PI - 0.5).clamp(0.0, h - 1.0);
    if dir.x() == 0.0 && dir.y() == 0.0 {
        // pole: longitude undefined, pick x = 0 deterministically
        return (0.0, y);
    }
    let phi = dir.y().atan2(dir.x());
    let mut x = (phi + PI) * w / (2.0 * PI) - 0.5;
    if x < 0.0 {
        x += w;
    } else if x >= w {
        x -= w;
    }
    (x, y)
}
