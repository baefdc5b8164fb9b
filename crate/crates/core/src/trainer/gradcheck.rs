use std::fmt;

use rand::Rng;

use super::loss::{estimator_gradients, estimator_loss, frozen_shared_map, model_gradients, total_loss, MiWeight};
use crate::error::{Error, Result};
use crate::miest::EstimatorPair;
use crate::model::{ModelConfig, Network};
use crate::nn::{Maps, ParamSet};
use crate::rng::{stream_rng, Stream};

/// Smallest model that still has every layer type: an 8x8 grid, four
/// trunk channels, one decoder path of one block, compression 4.
pub fn tiny_config() -> ModelConfig {
    ModelConfig::new(8, 8, 4.0)
        .and_then(|c| c.with_trunk(4, 1, 1))
        .expect("tiny configuration is valid")
}

/// Zeroes one entry of the analytic gradient before comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradFault {
    pub tensor: String,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub batch: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Gradients smaller than this in both estimates count as agreeing to
    /// within their absolute difference divided by this floor.
    pub floor: f64,
    pub weight: MiWeight,
    pub estimator_hidden: usize,
    pub fault: Option<GradFault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 0,
            batch: 4,
            step: 1e-4,
            tolerance: 1e-3,
            floor: 1e-6,
            weight: MiWeight {
                lambda: 0.5,
                target: 0.05,
            },
            estimator_hidden: 16,
            fault: None,
        }
    }
}

/// Worst disagreement within one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub group: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_err <= self.tolerance)
    }

    pub fn failures(&self) -> Vec<&GroupCheck> {
        self.groups.iter().filter(|g| g.max_rel_err > self.tolerance).collect()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "group,checked,max_rel_err,worst_tensor,worst_index,status")?;
        for g in &self.groups {
            let status = if g.max_rel_err <= self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{},{},{:.3e},{},{},{}",
                g.group, g.checked, g.max_rel_err, g.worst_tensor, g.worst_index, status
            )?;
        }
        Ok(())
    }
}

fn group_of(name: &str) -> &'static str {
    if name.starts_with("enc.") {
        "encoder"
    } else if name.starts_with("dec.") {
        "decoder"
    } else if name.starts_with("mi1.") {
        "estimator_shared"
    } else {
        "estimator_cross"
    }
}

/// Zeroes the faulted entry if `grads` holds the named tensor.
fn inject(grads: &mut ParamSet<f64>, fault: &Option<GradFault>) {
    if let Some(f) = fault {
        if let Some(id) = grads.find(&f.tensor) {
            grads.get_mut(id)[f.index] = 0.0;
        }
    }
}

fn validate_fault(fault: &GradFault, sets: [&ParamSet<f64>; 2]) -> Result<()> {
    let len = sets
        .iter()
        .find_map(|s| s.find(&fault.tensor).map(|id| s.get(id).len()))
        .ok_or_else(|| Error::Config(format!("no tensor named {}", fault.tensor)))?;
    if fault.index >= len {
        return Err(Error::Config(format!(
            "index {} out of range for {} ({len} entries)",
            fault.index, fault.tensor
        )));
    }
    Ok(())
}

/// Central-difference comparison of every analytic gradient entry.
fn compare(
    params: &mut ParamSet<f64>,
    analytic: &ParamSet<f64>,
    opts: &GradcheckOptions,
    groups: &mut Vec<GroupCheck>,
    mut loss: impl FnMut(&ParamSet<f64>) -> Result<f64>,
) -> Result<()> {
    for spec in params.specs().to_vec() {
        let group = group_of(&spec.name);
        let pos = match groups.iter().position(|g| g.group == group) {
            Some(p) => p,
            None => {
                groups.push(GroupCheck {
                    group: group.to_string(),
                    checked: 0,
                    max_rel_err: 0.0,
                    worst_tensor: String::new(),
                    worst_index: 0,
                });
                groups.len() - 1
            }
        };
        for j in 0..spec.len() {
            let i = spec.range().start + j;
            let a = analytic.data()[i];
            // A difference quotient that straddles an activation kink is
            // re-measured with smaller steps; a wrong gradient fails at all of them.
            let mut rel = f64::INFINITY;
            for shrink in [1.0, 0.1, 0.01] {
                let h = opts.step * shrink;
                let v = params.data()[i];
                params.data_mut()[i] = v + h;
                let up = loss(params)?;
                params.data_mut()[i] = v - h;
                let down = loss(params)?;
                params.data_mut()[i] = v;
                let numeric = (up - down) / (2.0 * h);
                rel = rel.min((a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor));
                if rel <= opts.tolerance {
                    break;
                }
            }
            let g = &mut groups[pos];
            g.checked += 1;
            if g.worst_tensor.is_empty() || rel > g.max_rel_err {
                g.max_rel_err = rel;
                g.worst_tensor = spec.name.clone();
                g.worst_index = j;
            }
        }
    }
    Ok(())
}

/// Checks analytic gradients of the model objective (encoder and decoder
/// groups) and of the estimator objective (both estimator groups) against
/// central differences in double precision.
pub fn finite_diff_gradcheck(model: &ModelConfig, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let net = Network::new(model.clone())?;
    let ests = EstimatorPair::new(model.n_s, model.n_t, opts.estimator_hidden);
    let mut rng = stream_rng(opts.seed, Stream::Evaluation);

    // Random biases and normalization affine so every path carries gradient.
    let mut params = net.init_params(opts.seed).params.cast::<f64>();
    for spec in params.specs().to_vec() {
        let vals = &mut params.data_mut()[spec.range()];
        if spec.name.ends_with(".bias") || spec.name.ends_with(".beta") {
            vals.iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        } else if spec.name.ends_with(".gamma") {
            vals.iter_mut().for_each(|v| *v = rng.random_range(0.7..1.3));
        }
    }
    let mut est_params = ests.init(&mut stream_rng(opts.seed, Stream::EstimatorInit)).cast::<f64>();
    if let Some(f) = &opts.fault {
        validate_fault(f, [&params, &est_params])?;
    }

    let (h, w) = (model.n_s, model.pol_width());
    let len = opts.batch * 2 * h * w;
    let mut draw = || -> Maps<f64> {
        let data = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
        Maps::from_vec(opts.batch, 2, h, w, data).expect("batch shape")
    };
    let (hv, hh) = (draw(), draw());

    let mut groups = Vec::new();

    let mut grads = params.zeros_like();
    model_gradients(&net, &ests, &params, None, &est_params, &hv, &hh, opts.weight, &mut grads)?;
    inject(&mut grads, &opts.fault);
    compare(&mut params, &grads, opts, &mut groups, |p| {
        Ok(total_loss(&net, &ests, p, &est_params, &hv, &hh, opts.weight)?.total)
    })?;

    let shared = frozen_shared_map(&net, &params, &hv, &hh)?;
    let mut est_grads = est_params.zeros_like();
    estimator_gradients(&ests, &est_params, &hv, &hh, &shared, &mut est_grads)?;
    inject(&mut est_grads, &opts.fault);
    compare(&mut est_params, &est_grads, opts, &mut groups, |p| {
        Ok(estimator_loss(&ests, p, &hv, &hh, &shared)?.total())
    })?;

    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        groups,
    })
}
