use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Potential, Qoi};
use crate::prior::{ParameterVector, PriorSpec};
use crate::rng::rng_from_seed;
use crate::stats::effective_sample_size;

use super::{mh_step, ChainConfig, ChainState};

/// Recorded (post-burn-in, thinned) chain states.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub config: ChainConfig,
    /// Transition index of every recorded state.
    pub steps: Vec<usize>,
    pub states: Vec<ParameterVector>,
    /// `Phi` of the target at each state.
    pub potentials: Vec<f64>,
    /// A second potential evaluated at each recorded state (dual chains).
    pub companion: Option<Vec<f64>>,
    /// QoI per state, one entry per component.
    pub qoi: Vec<Vec<f64>>,
    /// Whether the transition into each recorded state was accepted.
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub non_finite_rejections: usize,
    pub target_evaluations: usize,
    pub companion_evaluations: usize,
}

pub fn run_chain(
    target: &dyn Potential,
    prior: &PriorSpec,
    cfg: &ChainConfig,
    qoi: &dyn Qoi,
) -> Result<Chain> {
    run(target, None, prior, cfg, qoi)
}

/// Chain targeting `target`, with `companion` also evaluated at every
/// recorded state. A rejected move reuses the companion value of the
/// unchanged state.
pub fn run_dual_chain(
    target: &dyn Potential,
    companion: &dyn Potential,
    prior: &PriorSpec,
    cfg: &ChainConfig,
    qoi: &dyn Qoi,
) -> Result<Chain> {
    run(target, Some(companion), prior, cfg, qoi)
}

fn run(
    target: &dyn Potential,
    companion: Option<&dyn Potential>,
    prior: &PriorSpec,
    cfg: &ChainConfig,
    qoi: &dyn Qoi,
) -> Result<Chain> {
    cfg.validate()?;
    cfg.kernel.check_prior(prior)?;
    prior.validate()?;

    let mut rng = rng_from_seed(cfg.seed);
    let z0 = prior.draw(&mut rng);
    let phi0 = target.potential(&z0)?;
    if !phi0.is_finite() {
        return Err(invalid("initial state has non-finite potential"));
    }
    let mut state = ChainState { z: z0, phi: phi0 };
    let mut target_evaluations = 1;

    let mut out = Chain {
        config: *cfg,
        steps: Vec::with_capacity(cfg.length),
        states: Vec::with_capacity(cfg.length),
        potentials: Vec::with_capacity(cfg.length),
        companion: companion.map(|_| Vec::with_capacity(cfg.length)),
        qoi: Vec::with_capacity(cfg.length),
        accepted: Vec::with_capacity(cfg.length),
        acceptance_rate: 0.0,
        non_finite_rejections: 0,
        target_evaluations: 0,
        companion_evaluations: 0,
    };

    // companion value of the current state, invalidated on every accepted move
    let mut companion_cache: Option<f64> = None;
    let mut accepted_total = 0usize;
    let transitions = cfg.transitions();
    for step in 1..=transitions {
        let next = mh_step(&cfg.kernel, &state, target, &mut rng)?;
        target_evaluations += 1;
        if next.accepted {
            accepted_total += 1;
            companion_cache = None;
        }
        out.non_finite_rejections += usize::from(next.non_finite);
        state = next.state;

        if step > cfg.burn_in && (step - cfg.burn_in) % cfg.thin == 0 {
            if let (Some(c), Some(values)) = (companion, out.companion.as_mut()) {
                let v = match companion_cache {
                    Some(v) => v,
                    None => {
                        let v = c.potential(&state.z)?;
                        out.companion_evaluations += 1;
                        companion_cache = Some(v);
                        v
                    }
                };
                values.push(v);
            }
            out.steps.push(step);
            out.qoi.push(qoi.evaluate(&state.z));
            out.potentials.push(state.phi);
            out.states.push(state.z.clone());
            out.accepted.push(next.accepted);
        }
    }
    out.acceptance_rate = accepted_total as f64 / transitions as f64;
    out.target_evaluations = target_evaluations;
    Ok(out)
}

pub fn chain_mean(chain: &Chain, f: impl Fn(&ParameterVector) -> f64) -> Result<f64> {
    if chain.states.is_empty() {
        return Err(Error::Empty);
    }
    Ok(chain.states.iter().map(f).sum::<f64>() / chain.states.len() as f64)
}

pub fn chain_mean_vec(chain: &Chain, f: impl Fn(&ParameterVector) -> Vec<f64>) -> Result<Vec<f64>> {
    let mut it = chain.states.iter().map(f);
    let mut acc = it.next().ok_or(Error::Empty)?;
    for v in it {
        if v.len() != acc.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                got: v.len(),
            });
        }
        acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
    }
    let n = chain.states.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// JSON sidecar of a chain dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSummary {
    pub config: ChainConfig,
    pub length: usize,
    pub acceptance_rate: f64,
    pub non_finite_rejections: usize,
    pub target_evaluations: usize,
    pub companion_evaluations: usize,
    /// ESS per QoI component (absent for chains shorter than 10).
    pub ess: Option<Vec<f64>>,
    pub qoi_mean: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn qoi_dim(&self) -> usize {
        self.qoi.first().map_or(0, Vec::len)
    }

    /// QoI component `c` as a series.
    pub fn qoi_series(&self, c: usize) -> Vec<f64> {
        self.qoi.iter().map(|q| q[c]).collect()
    }

    pub fn qoi_mean(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Empty);
        }
        Ok((0..self.qoi_dim())
            .map(|c| self.qoi.iter().map(|q| q[c]).sum::<f64>() / self.len() as f64)
            .collect())
    }

    pub fn summary(&self) -> Result<ChainSummary> {
        let ess = if self.len() >= 10 {
            Some(
                (0..self.qoi_dim())
                    .map(|c| effective_sample_size(&self.qoi_series(c)))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(ChainSummary {
            config: self.config,
            length: self.len(),
            acceptance_rate: self.acceptance_rate,
            non_finite_rejections: self.non_finite_rejections,
            target_evaluations: self.target_evaluations,
            companion_evaluations: self.companion_evaluations,
            ess,
            qoi_mean: self.qoi_mean()?,
        })
    }

    /// CSV dump: `step,z_1..z_n,phi[,phi_companion],qoi|qoi_1..qoi_m,accepted`.
    ///
    /// Floats use Rust's shortest round-trip formatting, so a dump reloads
    /// bit-exactly.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let n = self.states.first().map_or(0, ParameterVector::dim);
        let m = self.qoi_dim();
        let mut header = vec!["step".to_string()];
        header.extend((1..=n).map(|j| format!("z_{j}")));
        header.push("phi".into());
        if self.companion.is_some() {
            header.push("phi_companion".into());
        }
        if m == 1 {
            header.push("qoi".into());
        } else {
            header.extend((1..=m).map(|c| format!("qoi_{c}")));
        }
        header.push("accepted".into());
        writeln!(out, "{}", header.join(","))?;

        for k in 0..self.len() {
            let mut row = vec![self.steps[k].to_string()];
            row.extend(self.states[k].values().iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", self.potentials[k]));
            if let Some(c) = &self.companion {
                row.push(format!("{:?}", c[k]));
            }
            row.extend(self.qoi[k].iter().map(|v| format!("{v:?}")));
            row.push(u8::from(self.accepted[k]).to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Rebuilds a chain from its CSV dump and JSON summary.
    pub fn read_csv(input: impl BufRead, prior: &PriorSpec, summary: &ChainSummary) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty chain file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let n = cols.iter().filter(|c| c.starts_with("z_")).count();
        let has_companion = cols.contains(&"phi_companion");
        let m = cols.iter().filter(|c| c.starts_with("qoi")).count();
        if n != prior.dim() || cols.first() != Some(&"step") || cols.last() != Some(&"accepted") {
            return Err(Error::Format(format!("unexpected chain header {header:?}")));
        }

        let mut chain = Chain {
            config: summary.config,
            steps: Vec::new(),
            states: Vec::new(),
            potentials: Vec::new(),
            companion: has_companion.then(Vec::new),
            qoi: Vec::new(),
            accepted: Vec::new(),
            acceptance_rate: summary.acceptance_rate,
            non_finite_rejections: summary.non_finite_rejections,
            target_evaluations: summary.target_evaluations,
            companion_evaluations: summary.companion_evaluations,
        };
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number {s:?} in chain file")))
        };
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Format(format!("row has {} fields, expected {}", f.len(), cols.len())));
            }
            chain
                .steps
                .push(f[0].parse().map_err(|_| Error::Format(format!("bad step {:?}", f[0])))?);
            let z = f[1..=n].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            chain.states.push(prior.parameter(z)?);
            let mut k = n + 1;
            chain.potentials.push(num(f[k])?);
            k += 1;
            if let Some(c) = chain.companion.as_mut() {
                c.push(num(f[k])?);
                k += 1;
            }
            chain
                .qoi
                .push(f[k..k + m].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?);
            chain.accepted.push(match f[k + m] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Format(format!("bad accepted flag {other:?}"))),
            });
        }
        if chain.len() != summary.length {
            return Err(Error::Format(format!(
                "chain file has {} rows, summary says {}",
                chain.len(),
                summary.length
            )));
        }
        Ok(chain)
    }
}
