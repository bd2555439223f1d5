//! Real spherical harmonics through band 3 (16 coefficients) for view
//! direction encoding.

use crate::math::Vec3;

pub const SH_DIM: usize = 16;

/// Evaluates the basis at a unit direction.
pub fn sh_encode(d: Vec3) -> [f64; SH_DIM] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        0.282_094_791_773_878_14,
        -0.488_602_511_902_919_87 * y,
        0.488_602_511_902_919_87 * z,
        -0.488_602_511_902_919_87 * x,
        1.092_548_430_592_079_2 * x * y,
        -1.092_548_430_592_079_2 * y * z,
        0.946_174_695_757_559_97 * zz - 0.315_391_565_252_519_99,
        -1.092_548_430_592_079_2 * x * z,
        0.546_274_215_296_039_59 * (xx - yy),
        0.590_043_589_926_643_52 * y * (-3.0 * xx + yy),
        2.890_611_442_640_553_8 * x * y * z,
        0.457_045_799_464_465_72 * y * (1.0 - 5.0 * zz),
        0.373_176_332_590_115_4 * z * (5.0 * zz - 3.0),
        0.457_045_799_464_465_72 * x * (1.0 - 5.0 * zz),
        1.445_305_721_320_276_9 * z * (xx - yy),
        0.590_043_589_926_643_52 * x * (-xx + 3.0 * yy),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_zero_is_constant_and_basis_is_orthonormal_on_sphere() {
        // Monte Carlo over a Fibonacci sphere: <Y_i, Y_j> ~ delta_ij / (4 pi) * 4 pi.
        let n = 20_000;
        let mut gram = [[0.0f64; SH_DIM]; SH_DIM];
        let golden = core::f64::consts::PI * (3.0 - crate::math::sqrt(5.0));
        for k in 0..n {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = crate::math::sqrt(1.0 - z * z);
            let phi = golden * k as f64;
            let y = sh_encode(Vec3::new(r * crate::math::cos(phi), r * crate::math::sin(phi), z));
            for i in 0..SH_DIM {
                for j in 0..SH_DIM {
                    gram[i][j] += y[i] * y[j];
                }
            }
        }
        let scale = 4.0 * core::f64::consts::PI / n as f64;
        for i in 0..SH_DIM {
            for j in 0..SH_DIM {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i][j] * scale - want).abs() < 1e-2, "({i},{j}) = {}", gram[i][j] * scale);
            }
        }
    }
}
