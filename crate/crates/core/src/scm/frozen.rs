//! Calibration constants frozen from a `CALIBRATION_ROWS` observational draw
//! with `CALIBRATION_SEED` under the default options. Regenerate with
//! `scm::calibrate` if the equations change; a unit test checks they match.

use std::collections::BTreeMap;

use super::{Calibration, ModelName};

pub(super) fn calibration(name: ModelName) -> Calibration {
    let (cutoffs, ranges): (&[(&str, f64)], Vec<(f64, f64)>) = match name {
        ModelName::CausalHealth => (
            &[],
            vec![
                (1.012595935181514, 99.00914981992409),
                (-2.5537473026723734, 72.43121193294206),
                (-66.59817046134152, 108.05261322447309),
                (-18.657289127112048, 80.53585330995871),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
            ],
        ),
        ModelName::Hiring => (
            &[("hiring", 55.3090892434889)],
            vec![
                (0.0, 9.0),
                (0.14933773159070113, 6.639649665004569),
                (0.0, 6.0),
                (1.8332311383622395, 13.433487985041802),
                (-2.125609204925178, 11.13284352181841),
                (-0.823490874208921, 40.01566351935494),
                (0.0, 1.0),
            ],
        ),
        ModelName::Student => (
            &[("national", 16.269029971930493), ("regional", 11.297896661754649)],
            vec![
                (0.0, 4.0),
                (-7.154690307645609, 8.180437963338996),
                (3.0152808490363077, 16.975905912004993),
                (-2.5272484029671194, 10.658542940347951),
                (0.5103734447977138, 11.894527687260043),
                (0.0, 2.0),
            ],
        ),
    };
    Calibration {
        cutoffs: cutoffs.iter().map(|&(k, v)| (k.to_owned(), v)).collect::<BTreeMap<_, _>>(),
        ranges,
    }
}
