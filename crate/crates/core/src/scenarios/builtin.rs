//! Built-in experiment definitions.

use super::{AcquisitionKind, ModelKind, NoiseSpec, ObjectiveKind, ScenarioSpec, StageSpec, StageStart};
use crate::error::{Error, Result};

use ObjectiveKind::{Fwi, Mswi};
use StageStart::{Homogeneous, Previous};

const NAMES: [&str; 6] = ["lens_fwi_only", "lens_mswi_fwi", "oblate_near", "oblate_far", "camembert", "lens_noise"];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

/// The named scenario at resolution `scale` (1 is the full 20 m grid).
/// Smoothing lengths follow the grid so their physical extent is fixed.
pub fn builtin(name: &str, scale: f64) -> Result<ScenarioSpec> {
    let (model, acq, stages) = match name {
        "lens_fwi_only" => {
            (ModelKind::Circular, AcquisitionKind::Near, vec![StageSpec::new("fwi", Fwi, Homogeneous, 10, 12)])
        }
        "lens_mswi_fwi" => (
            ModelKind::Circular,
            AcquisitionKind::Near,
            vec![StageSpec::new("mswi", Mswi, Homogeneous, 10, 12), StageSpec::new("fwi", Fwi, Previous, 10, 12)],
        ),
        "oblate_near" => (
            ModelKind::Oblate,
            AcquisitionKind::Near,
            vec![StageSpec::new("mswi", Mswi, Homogeneous, 10, 12), StageSpec::new("fwi", Fwi, Previous, 10, 12)],
        ),
        "oblate_far" => (
            ModelKind::Oblate,
            AcquisitionKind::Far,
            vec![
                StageSpec::new("fwi_only", Fwi, Homogeneous, 10, 12),
                StageSpec::new("mswi", Mswi, Homogeneous, 10, 37),
                StageSpec::new("fwi", Fwi, Previous, 10, 25),
            ],
        ),
        "camembert" => (
            ModelKind::Camembert,
            AcquisitionKind::Far,
            vec![
                StageSpec::new("mswi", Mswi, Homogeneous, 10, 12),
                StageSpec::new("fwi", Fwi, Previous, 10, 12),
                StageSpec::new("fwi_hires", Fwi, Previous, 2, 25),
            ],
        ),
        "lens_noise" => (
            ModelKind::Circular,
            AcquisitionKind::Near,
            vec![
                StageSpec::new("fwi_only", Fwi, Homogeneous, 10, 12),
                StageSpec::new("mswi", Mswi, Homogeneous, 10, 12),
                StageSpec::new("fwi", Fwi, Previous, 10, 12),
            ],
        ),
        _ => return Err(Error::invalid(format!("unknown scenario {name:?}; available: {}", NAMES.join(", ")))),
    };
    let mut spec = ScenarioSpec::paper(name, model, acq).with_scale(scale);
    spec.stages = stages
        .into_iter()
        .map(|mut s| {
            s.smoothing.length = ((s.smoothing.length as f64 * scale).round() as usize).max(1);
            s
        })
        .collect();
    if name == "lens_noise" {
        spec.noise = Some(NoiseSpec::default());
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_validate() {
        for n in builtin_names() {
            let s = builtin(n, 0.5).unwrap();
            assert_eq!(s.name, *n);
        }
        assert!(builtin("nope", 1.0).is_err());
    }
}
