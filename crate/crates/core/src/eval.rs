//! Error estimates, resolution studies, noise robustness and spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::model_fingerprint;
use crate::nop::{Arch, OperatorModel};
use crate::pde::{Dataset, FieldSample};
use crate::random::{add_noise, Rng};
use crate::spectral::{spectrum, SpectrumProfile};
use crate::tensor::Tensor;
use crate::train::relative_l2_batch;

/// Samples per forward evaluation.
pub const EVAL_CHUNK: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub resolution: usize,
    pub samples: usize,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub fingerprint: String,
    /// Ascending in resolution.
    pub entries: Vec<ReportEntry>,
}

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("resolution,samples,error\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{:.17e}\n", e.resolution, e.samples, e.error));
        }
        s
    }

    /// Aligned columns, one resolution per row.
    pub fn to_table(&self) -> String {
        let mut s = format!("model {}\n{:>10}  {:>8}  {:>12}\n", self.fingerprint, "s", "samples", "rel. L2");
        for e in &self.entries {
            s.push_str(&format!("{:>10}  {:>8}  {:>12.6}\n", e.resolution, e.samples, e.error));
        }
        s
    }

    /// Largest over smallest error across resolutions.
    pub fn spread(&self) -> f64 {
        let max = self.entries.iter().map(|e| e.error).fold(f64::NEG_INFINITY, f64::max);
        let min = self.entries.iter().map(|e| e.error).fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Model outputs for every sample of `ds`, stacked like `ds.outputs`.
pub fn predict_dataset(model: &OperatorModel, ds: &Dataset, rng: &mut Rng) -> Result<Tensor> {
    let n = ds.len();
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n {
        let len = EVAL_CHUNK.min(n - start);
        let part = ds.range(start, len)?;
        parts.push(model.predict(&ds.grid, &part.inputs, rng)?);
        start += len;
    }
    if parts.is_empty() {
        return Err(Error::Contract("prediction over an empty dataset".into()));
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat(&refs, 0)
}

/// Mean relative L2 error of `model` on `ds`.
pub fn evaluate(model: &OperatorModel, ds: &Dataset, rng: &mut Rng) -> Result<ReportEntry> {
    let pred = predict_dataset(model, ds, rng)?;
    let errs = relative_l2_batch(&pred, &ds.outputs)?;
    Ok(ReportEntry {
        resolution: ds.grid.sizes[0],
        samples: errs.len(),
        error: errs.iter().sum::<f64>() / errs.len() as f64,
    })
}

/// Fails unless one parameter set can be evaluated on `ds`'s discretization.
pub fn check_transferable(model: &OperatorModel, ds: &Dataset) -> Result<()> {
    if let Arch::DeepOnet { sensors, .. } = model.config.arch {
        let got = ds.grid.num_points() * ds.input_channels();
        if got != sensors {
            return Err(Error::Contract(format!(
                "fixed-sensor architecture: deep_onet was trained on {sensors} sensor values and cannot be evaluated on a grid providing {got}; its parameter count grows with the discretization"
            )));
        }
    }
    Ok(())
}

/// One evaluation per dataset with the same parameters; entries sorted by resolution.
pub fn resolution_sweep(model: &OperatorModel, datasets: &[Dataset], rng: &mut Rng) -> Result<ErrorReport> {
    for ds in datasets {
        check_transferable(model, ds)?;
    }
    let mut entries = datasets.iter().map(|d| evaluate(model, d, rng)).collect::<Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.resolution);
    Ok(ErrorReport {
        fingerprint: model_fingerprint(model),
        entries,
    })
}

/// Zero-shot evaluation on a finer discretization than the training one.
pub fn superresolution(model: &OperatorModel, fine: &Dataset, rng: &mut Rng) -> Result<ReportEntry> {
    check_transferable(model, fine)?;
    evaluate(model, fine, rng)
}

/// Same samples with every input perturbed by [`add_noise`] at `level`.
pub fn noisy_inputs(ds: &Dataset, level: f64, rng: &mut Rng) -> Result<Dataset> {
    let mut data = Vec::with_capacity(ds.inputs.len());
    for i in 0..ds.len() {
        data.extend_from_slice(add_noise(&ds.input(i)?, level, rng)?.data());
    }
    ds.with_inputs(Tensor::new(ds.inputs.shape(), data)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub clean: f64,
    pub noisy: f64,
}

impl RobustnessReport {
    pub fn gap(&self) -> f64 {
        (self.noisy - self.clean).abs()
    }
}

/// Errors on clean and on noise-perturbed copies of the test inputs.
pub fn robustness(model: &OperatorModel, clean: &Dataset, level: f64, rng: &mut Rng) -> Result<RobustnessReport> {
    let noisy = noisy_inputs(clean, level, rng)?;
    Ok(RobustnessReport {
        clean: evaluate(model, clean, rng)?.error,
        noisy: evaluate(model, &noisy, rng)?.error,
    })
}

/// Default slope band `[4, s/6]`.
pub fn default_band(s: usize) -> (usize, usize) {
    (4, s / 6)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectraComparison {
    pub predicted: SpectrumProfile,
    pub truth: SpectrumProfile,
    pub band: (usize, usize),
    /// Log-log slopes over `band`; `None` when the profile has too few positive bins (e.g. a zero field).
    pub predicted_slope: Option<f64>,
    pub truth_slope: Option<f64>,
}

/// Spectrum averaged over snapshots of one 2-D periodic field.
pub fn mean_spectrum(snapshots: &[FieldSample]) -> Result<SpectrumProfile> {
    let mut acc: Option<SpectrumProfile> = None;
    for f in snapshots {
        let p = spectrum(&f.values)?;
        match &mut acc {
            None => acc = Some(p),
            Some(a) => {
                if a.wavenumbers != p.wavenumbers {
                    return Err(Error::shape("mean_spectrum", &[a.wavenumbers.len()], &[p.wavenumbers.len()]));
                }
                a.magnitude.iter_mut().zip(&p.magnitude).for_each(|(x, y)| *x += y);
            }
        }
    }
    let mut a = acc.ok_or_else(|| Error::Contract("spectrum of an empty snapshot list".into()))?;
    let n = snapshots.len() as f64;
    a.magnitude.iter_mut().for_each(|x| *x /= n);
    Ok(a)
}

/// Spectra of predicted and true snapshots with slopes over `band` (default [`default_band`]).
pub fn compare_spectra(pred: &[FieldSample], truth: &[FieldSample], band: Option<(usize, usize)>) -> Result<SpectraComparison> {
    if pred.len() != truth.len() || pred.iter().zip(truth).any(|(p, t)| p.grid != t.grid) {
        return Err(Error::Contract("predicted and true snapshots must share grids and time indices".into()));
    }
    let predicted = mean_spectrum(pred)?;
    let truth_p = mean_spectrum(truth)?;
    let band = band.unwrap_or_else(|| default_band(truth[0].grid.sizes[0]));
    Ok(SpectraComparison {
        predicted_slope: predicted.fit_slope(band.0, band.1).ok(),
        truth_slope: truth_p.fit_slope(band.0, band.1).ok(),
        predicted,
        truth: truth_p,
        band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Grid;

    #[test]
    fn zero_prediction_has_zero_profile() {
        let g = Grid::torus(16).unwrap();
        let mut rng = Rng::new(1);
        let t = FieldSample::scalar(g.clone(), (0..256).map(|_| rng.normal()).collect()).unwrap();
        let z = FieldSample::scalar(g, vec![0.0; 256]).unwrap();
        let c = compare_spectra(&[z], std::slice::from_ref(&t), None).unwrap();
        assert!(c.predicted.magnitude.iter().all(|&m| m == 0.0));
        assert!(c.predicted_slope.is_none());
        let same = compare_spectra(std::slice::from_ref(&t), std::slice::from_ref(&t), Some((2, 8))).unwrap();
        assert_eq!(same.predicted, same.truth);
    }
}
