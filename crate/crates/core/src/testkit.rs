//! Calibrated fixtures shared by the unit tests.

use std::sync::OnceLock;

use crate::domains::CalibrationConfig;
use crate::germ::Germ;
use crate::harness::FlowerPetals;
use crate::numeric::C64;
use crate::poly::{Monomial, TruncatedPoly};

fn quick() -> CalibrationConfig {
    CalibrationConfig {
        samples: 1000,
        fit_orbits: 8,
        fit_orbit_len: 500,
        chart_samples: 16,
        ..Default::default()
    }
}

fn calibrated(multi_index: Vec<u32>, a: Vec<C64>) -> FlowerPetals {
    let g = Germ::model(multi_index, a).expect("valid model germ");
    FlowerPetals::calibrate(&g, &quick()).expect("calibration")
}

/// `M = (1, 1)`, `a = (-1/2, -1/2)`.
pub(crate) fn worked() -> &'static FlowerPetals {
    static CELL: OnceLock<FlowerPetals> = OnceLock::new();
    CELL.get_or_init(|| calibrated(vec![1, 1], vec![C64::new(-0.5, 0.0), C64::new(-0.5, 0.0)]))
}

/// `M = (2)`, `a = -1/2`: two attracting and two repelling directions.
pub(crate) fn double() -> &'static FlowerPetals {
    static CELL: OnceLock<FlowerPetals> = OnceLock::new();
    CELL.get_or_init(|| calibrated(vec![2], vec![C64::new(-0.5, 0.0)]))
}

/// The worked germ with `A_1 = (0.5 + 0.2i) x_1`, `A_2 = 0.3 x_2`.
pub(crate) fn perturbed() -> &'static FlowerPetals {
    static CELL: OnceLock<FlowerPetals> = OnceLock::new();
    CELL.get_or_init(|| {
        let term = |i: usize, coeff: C64| {
            let mut exponent = vec![0, 0];
            exponent[i] = 1;
            TruncatedPoly::new(2, 1, vec![Monomial { exponent, coeff }]).expect("valid polynomial")
        };
        let g = Germ::new(
            vec![1, 1],
            vec![C64::new(-0.5, 0.0), C64::new(-0.5, 0.0)],
            vec![term(0, C64::new(0.5, 0.2)), term(1, C64::new(0.3, 0.0))],
            0.5,
        )
        .expect("valid germ");
        FlowerPetals::calibrate(
            &g,
            &CalibrationConfig {
                chart_samples: 8,
                ..quick()
            },
        )
        .expect("calibration")
    })
}
