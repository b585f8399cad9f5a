//! Published coupling sequences, embedded as golden data.
//!
//! Positions are in units of λ_0 = 2π/k_0 with k_0 = 1.5, exactly as printed.

use std::f64::consts::PI;

use crate::coupling::{CouplingPoint, CouplingSequence, DEFAULT_G0};
use crate::error::{Error, Result};

/// λ_0 for the published designs (k_0 = 1.5).
pub fn lambda0() -> f64 {
    2.0 * PI / 1.5
}

const S1_X: [f64; 28] = [
    -8.196, -7.901, -6.992, -6.682, -4.721, -4.396, -3.726, -3.419, -2.732, -2.441, -1.71, -1.46,
    -0.507, -0.006, 0.244, 0.544, 1.488, 2.459, 3.439, 4.448, 4.861, 5.44, 5.88, 6.383, 6.846,
    7.166, 7.857, 8.168,
];

const S1_A: [f64; 28] = [
    0.0184, 0.0291, 0.0268, 0.0146, 0.0306, 0.0502, 0.0302, 0.086, 0.0317, 0.1206, 0.0906, 0.0748,
    0.0223, 0.1413, 0.1553, 0.9543, 0.0458, 0.1441, 0.1305, 0.1152, 0.0298, 0.0393, 0.0402,
    0.0219, 0.0472, 0.0184, 0.0366, 0.0265,
];

// Printed row order (not monotone in x); phases in units of π.
const S2_X: [f64; 10] = [-0.909, -0.757, -0.383, -0.508, -0.0975, -0.222, 0.393, 0.120, 0.641, 0.909];
const S2_A: [f64; 10] = [0.088, 0.130, 0.628, 0.429, 0.392, 0.591, 0.365, 0.198, 0.615, 0.243];
const S2_THETA: [f64; 10] = [0.388, -0.500, -0.446, 0.500, -0.500, 0.500, -0.500, 0.179, 0.0048, 0.460];

// Amplitudes re-solved on a subset of the band-gap table's positions: the
// nonnegative amplitudes minimizing the worst in-gap |G_k| at unit plateau
// median. Points that came out exactly zero are omitted.
const REFIT: [(f64, f64); 9] = [
    (-6.992, 0.00800177563532658),
    (-6.682, 0.00374724764246005),
    (-1.46, 0.2029552416564363),
    (-0.006, 0.7409449975347802),
    (0.244, 0.2449173174453938),
    (0.544, 0.5966821636991239),
    (5.88, 0.06528938993884914),
    (6.383, 0.04838240812634695),
    (7.166, 0.00594717673776941),
];

/// The 28-point real band-gap sequence.
pub fn table_s1() -> CouplingSequence {
    let points = S1_X.iter().zip(S1_A).map(|(&x, a)| CouplingPoint::new(x, a, 0.0)).collect();
    CouplingSequence::new(points, DEFAULT_G0, lambda0(), "table_s1").expect("embedded table is valid")
}

/// The 10-point complex chiral sequence, canonically sorted.
pub fn table_s2() -> CouplingSequence {
    let points = (0..10)
        .map(|i| CouplingPoint::new(S2_X[i], S2_A[i], S2_THETA[i] * PI))
        .collect();
    CouplingSequence::new(points, DEFAULT_G0, lambda0(), "table_s2").expect("embedded table is valid")
}

/// Real band-gap sequence on the [`table_s1`] positions with re-solved
/// amplitudes; its spectrum has an actual gap (worst in-gap |G_k| ≈ 2.7e-4 of
/// the plateau), unlike the printed amplitudes.
pub fn table_s1_refit() -> CouplingSequence {
    let points = REFIT.iter().map(|&(x, a)| CouplingPoint::new(x, a, 0.0)).collect();
    CouplingSequence::new(points, DEFAULT_G0, lambda0(), "table_s1_refit").expect("embedded table is valid")
}

pub const BUILTIN_IDS: [&str; 3] = ["table_s1", "table_s2", "table_s1_refit"];

pub fn builtin_sequence(id: &str) -> Result<CouplingSequence> {
    match id {
        "table_s1" => Ok(table_s1()),
        "table_s2" => Ok(table_s2()),
        "table_s1_refit" => Ok(table_s1_refit()),
        other => Err(Error::InvalidArgument(format!(
            "unknown builtin sequence '{other}' (known: {})",
            BUILTIN_IDS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_gap_table() {
        let s = table_s1();
        assert_eq!(s.len(), 28);
        let p = s.points().iter().find(|p| p.x == 0.544).unwrap();
        assert_eq!(p.amplitude, 0.9543);
        assert!(s.is_real_nonnegative());
        assert!(s.points().windows(2).all(|w| w[0].x < w[1].x));
    }

    #[test]
    fn chiral_table() {
        let s = table_s2();
        assert_eq!(s.len(), 10);
        let p = s.points().iter().find(|p| p.x == 0.909).unwrap();
        assert_eq!(p.phase, 0.460 * PI);
        assert!(s.points().windows(2).all(|w| w[0].x < w[1].x));
        assert_eq!(s.points()[0].x, -0.909);
        assert_eq!(s.points()[2].x, -0.508);
    }

    #[test]
    fn refit_uses_table_positions() {
        let s = table_s1_refit();
        for p in s.points() {
            assert!(S1_X.contains(&p.x));
            assert!(p.amplitude > 0.0);
        }
    }

    #[test]
    fn lookup() {
        assert_eq!(builtin_sequence("table_s2").unwrap(), table_s2());
        assert!(builtin_sequence("table_s3").is_err());
    }
}
