//! The student: a small actor-critic MLP with hand-written gradients.
//!
//! Observations are one-hot encoded into 938 scalars and fed through
//! 938 -> 128 -> 128 (ReLU) into a 7-logit actor head and a scalar value
//! head. Gradients are analytic and verified against central finite
//! differences in the tests; there is no autodiff. The first layer is
//! stored input-major to exploit the encoding's sparsity (at most ~150 of
//! 938 entries are nonzero).

use std::io::{Read, Write};
use std::path::Path;

use anyhow::bail;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gridworld::{Action, Color, DoorState, Observation, OBS_KIND_SLOTS, VIEW_SIZE};

pub const COLOR_SLOTS: usize = 7; // 6 colors + none
pub const DOOR_SLOTS: usize = 4; // locked, closed, open, n.a.
pub const CELL_SLOTS: usize = OBS_KIND_SLOTS + COLOR_SLOTS + DOOR_SLOTS;
pub const ENCODING_LEN: usize = VIEW_SIZE * VIEW_SIZE * CELL_SLOTS + COLOR_SLOTS;

pub const HIDDEN: usize = 128;
pub const ACTIONS: usize = Action::COUNT;

// flat parameter layout; w1 is stored input-major (938 rows of 128)
const W1: usize = 0;
const B1: usize = W1 + ENCODING_LEN * HIDDEN;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + HIDDEN * HIDDEN;
const WA: usize = B2 + HIDDEN;
const BA: usize = WA + ACTIONS * HIDDEN;
const WV: usize = BA + ACTIONS;
const BV: usize = WV + HIDDEN;
pub const PARAM_COUNT: usize = BV + 1;

/// Flattens an observation into the fixed one-hot layout: per view cell a
/// kind group, a color group and a door-state group, then the carried
/// item.
pub fn encode(obs: &Observation) -> Vec<f64> {
    let mut enc = vec![0.0; ENCODING_LEN];
    for vy in 0..VIEW_SIZE {
        for vx in 0..VIEW_SIZE {
            let cell = obs.view[vy][vx];
            let base = (vy * VIEW_SIZE + vx) * CELL_SLOTS;
            enc[base + cell.kind as usize] = 1.0;
            let color_slot = cell.color.map_or(COLOR_SLOTS - 1, Color::index);
            enc[base + OBS_KIND_SLOTS + color_slot] = 1.0;
            let door_slot = match cell.door_state {
                Some(DoorState::Locked) => 0,
                Some(DoorState::Closed) => 1,
                Some(DoorState::Open) => 2,
                None => 3,
            };
            enc[base + OBS_KIND_SLOTS + COLOR_SLOTS + door_slot] = 1.0;
        }
    }
    let carried = obs.carrying.map_or(COLOR_SLOTS - 1, Color::index);
    enc[VIEW_SIZE * VIEW_SIZE * CELL_SLOTS + carried] = 1.0;
    enc
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticOutput {
    pub logits: [f64; ACTIONS],
    pub value: f64,
}

impl ActorCriticOutput {
    pub fn probs(&self) -> [f64; ACTIONS] {
        softmax(&self.logits)
    }

    pub fn log_probs(&self) -> [f64; ACTIONS] {
        log_softmax(&self.logits)
    }

    /// Highest-logit action; ties break toward the lower action index.
    pub fn greedy(&self) -> Action {
        let mut best = 0;
        for i in 1..ACTIONS {
            if self.logits[i] > self.logits[best] {
                best = i;
            }
        }
        Action::from_index(best).unwrap()
    }
}

pub fn softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; ACTIONS];
    let mut sum = 0.0;
    for i in 0..ACTIONS {
        out[i] = (logits[i] - max).exp();
        sum += out[i];
    }
    for p in &mut out {
        *p /= sum;
    }
    out
}

pub fn log_softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let mut out = [0.0; ACTIONS];
    for i in 0..ACTIONS {
        out[i] = logits[i] - lse;
    }
    out
}

/// Categorical draw from softmax(logits), with the matching log-prob.
pub fn sample_action(output: &ActorCriticOutput, rng: &mut ChaCha8Rng) -> (Action, f64) {
    let probs = output.probs();
    let log_probs = output.log_probs();
    let draw = rng.gen::<f64>();
    let mut acc = 0.0;
    for i in 0..ACTIONS {
        acc += probs[i];
        if draw < acc {
            return (Action::from_index(i).unwrap(), log_probs[i]);
        }
    }
    (Action::from_index(ACTIONS - 1).unwrap(), log_probs[ACTIONS - 1])
}

/// One transition prepared for the loss: encoding, what was done, how it
/// was valued then, and the teacher's target distribution if any.
pub struct Sample<'a> {
    pub encoding: &'a [f64],
    pub action: usize,
    pub advantage: f64,
    pub return_target: f64,
    pub old_log_prob: f64,
    pub teacher: Option<[f64; ACTIONS]>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossCoeffs {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Minibatch means of each loss component. `distill` is the raw
/// cross-entropy H(teacher || student) before the λ weighting.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub distill: f64,
}

struct ForwardCache {
    h1: [f64; HIDDEN],
    h2: [f64; HIDDEN],
    output: ActorCriticOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros() -> PolicyParams {
        PolicyParams { data: vec![0.0; PARAM_COUNT] }
    }

    /// Uniform init scaled by 1/sqrt(fan_in) per layer, biases zero, the
    /// actor head shrunk 100x so the starting policy is near uniform and
    /// early teacher guidance dominates.
    pub fn seeded(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; PARAM_COUNT];
        let mut fill = |range: std::ops::Range<usize>, scale: f64, data: &mut Vec<f64>| {
            for v in &mut data[range] {
                *v = rng.gen_range(-1.0..1.0) * scale;
            }
        };
        let s1 = 1.0 / (ENCODING_LEN as f64).sqrt();
        let s2 = 1.0 / (HIDDEN as f64).sqrt();
        fill(W1..B1, s1, &mut data);
        fill(W2..B2, s2, &mut data);
        fill(WA..BA, s2 * 0.01, &mut data);
        fill(WV..BV, s2, &mut data);
        PolicyParams { data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn forward(&self, enc: &[f64]) -> ActorCriticOutput {
        self.forward_cached(enc).output
    }

    fn forward_cached(&self, enc: &[f64]) -> ForwardCache {
        assert_eq!(enc.len(), ENCODING_LEN, "encoding length mismatch");
        let p = &self.data;

        let mut h1 = [0.0; HIDDEN];
        h1.copy_from_slice(&p[B1..B1 + HIDDEN]);
        for (i, &x) in enc.iter().enumerate() {
            if x != 0.0 {
                let row = &p[W1 + i * HIDDEN..W1 + (i + 1) * HIDDEN];
                for (h, w) in h1.iter_mut().zip(row) {
                    *h += x * w;
                }
            }
        }
        for h in &mut h1 {
            *h = h.max(0.0);
        }

        let mut h2 = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            let row = &p[W2 + j * HIDDEN..W2 + (j + 1) * HIDDEN];
            let mut acc = p[B2 + j];
            for (w, h) in row.iter().zip(&h1) {
                acc += w * h;
            }
            h2[j] = acc.max(0.0);
        }

        let mut logits = [0.0; ACTIONS];
        for (a, logit) in logits.iter_mut().enumerate() {
            let row = &p[WA + a * HIDDEN..WA + (a + 1) * HIDDEN];
            let mut acc = p[BA + a];
            for (w, h) in row.iter().zip(&h2) {
                acc += w * h;
            }
            *logit = acc;
        }
        let mut value = p[BV];
        for (w, h) in p[WV..WV + HIDDEN].iter().zip(&h2) {
            value += w * h;
        }

        ForwardCache { h1, h2, output: ActorCriticOutput { logits, value } }
    }

    /// Mean loss over the minibatch and its gradient.
    ///
    /// loss = clipped surrogate + value_coef * value MSE
    ///        - entropy_coef * entropy + λ * H(teacher || student).
    /// The teacher distribution is constant data; gradient flows only
    /// through the student parameters.
    pub fn loss_grad(
        &self,
        batch: &[Sample<'_>],
        lambda: f64,
        coeffs: &LossCoeffs,
    ) -> anyhow::Result<(LossStats, Vec<f64>)> {
        assert!(!batch.is_empty(), "empty minibatch");
        let p = &self.data;
        let mut grad = vec![0.0; PARAM_COUNT];
        let mut stats = LossStats::default();
        let scale = 1.0 / batch.len() as f64;

        for sample in batch {
            let cache = self.forward_cached(sample.encoding);
            let probs = cache.output.probs();
            let log_probs = cache.output.log_probs();
            let value = cache.output.value;

            // clipped surrogate (sign flipped: we minimize)
            let ratio = (log_probs[sample.action] - sample.old_log_prob).exp();
            let clipped = ratio.clamp(1.0 - coeffs.clip, 1.0 + coeffs.clip);
            let adv = sample.advantage;
            let surrogate = (ratio * adv).min(clipped * adv);
            stats.policy -= scale * surrogate;
            // d(-surrogate)/dlogits, zero when the clip saturates
            let ratio_active =
                ratio * adv <= clipped * adv || (1.0 - coeffs.clip..=1.0 + coeffs.clip).contains(&ratio);
            let mut dlogits = [0.0; ACTIONS];
            if ratio_active {
                for a in 0..ACTIONS {
                    let indicator = if a == sample.action { 1.0 } else { 0.0 };
                    dlogits[a] -= adv * ratio * (indicator - probs[a]);
                }
            }

            // value MSE
            let verr = value - sample.return_target;
            stats.value += scale * verr * verr;
            let dvalue = scale * coeffs.value_coef * 2.0 * verr;

            // entropy bonus
            let entropy: f64 = -probs
                .iter()
                .zip(&log_probs)
                .map(|(&pr, &lp)| if pr > 0.0 { pr * lp } else { 0.0 })
                .sum::<f64>();
            stats.entropy += scale * entropy;
            for a in 0..ACTIONS {
                if probs[a] > 0.0 {
                    dlogits[a] += coeffs.entropy_coef * probs[a] * (log_probs[a] + entropy);
                }
            }

            // distillation cross-entropy toward the teacher
            if let Some(teacher) = &sample.teacher {
                if lambda != 0.0 {
                    let h: f64 = -teacher
                        .iter()
                        .zip(&log_probs)
                        .map(|(&t, &lp)| if t > 0.0 { t * lp } else { 0.0 })
                        .sum::<f64>();
                    stats.distill += scale * h;
                    for a in 0..ACTIONS {
                        dlogits[a] += lambda * (probs[a] - teacher[a]);
                    }
                }
            }

            for d in &mut dlogits {
                *d *= scale;
            }

            // backprop: heads -> h2 -> h1 -> input-major first layer
            let mut dh2 = [0.0; HIDDEN];
            for a in 0..ACTIONS {
                let row = &p[WA + a * HIDDEN..WA + (a + 1) * HIDDEN];
                for j in 0..HIDDEN {
                    dh2[j] += dlogits[a] * row[j];
                    grad[WA + a * HIDDEN + j] += dlogits[a] * cache.h2[j];
                }
                grad[BA + a] += dlogits[a];
            }
            for j in 0..HIDDEN {
                dh2[j] += dvalue * p[WV + j];
                grad[WV + j] += dvalue * cache.h2[j];
            }
            grad[BV] += dvalue;

            for (d, h) in dh2.iter_mut().zip(&cache.h2) {
                if *h <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut dh1 = [0.0; HIDDEN];
            for j in 0..HIDDEN {
                if dh2[j] == 0.0 {
                    continue;
                }
                let row = &p[W2 + j * HIDDEN..W2 + (j + 1) * HIDDEN];
                for k in 0..HIDDEN {
                    dh1[k] += dh2[j] * row[k];
                    grad[W2 + j * HIDDEN + k] += dh2[j] * cache.h1[k];
                }
                grad[B2 + j] += dh2[j];
            }
            for (d, h) in dh1.iter_mut().zip(&cache.h1) {
                if *h <= 0.0 {
                    *d = 0.0;
                }
            }
            for (i, &x) in sample.encoding.iter().enumerate() {
                if x != 0.0 {
                    let row = &mut grad[W1 + i * HIDDEN..W1 + (i + 1) * HIDDEN];
                    for (g, d) in row.iter_mut().zip(&dh1) {
                        *g += x * d;
                    }
                }
            }
            for k in 0..HIDDEN {
                grad[B1 + k] += dh1[k];
            }
        }

        stats.value *= coeffs.value_coef;
        stats.total =
            stats.policy + stats.value - coeffs.entropy_coef * stats.entropy + lambda * stats.distill;
        if !stats.total.is_finite() {
            bail!(
                "non-finite loss: policy {} value {} entropy {} distill {} (λ {lambda})",
                stats.policy,
                stats.value,
                stats.entropy,
                stats.distill
            );
        }
        Ok((stats, grad))
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(MAGIC)?;
        file.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for dim in LAYOUT {
            file.write_all(&(dim as u32).to_le_bytes())?;
        }
        file.write_all(&(self.data.len() as u64).to_le_bytes())?;
        for v in &self.data {
            file.write_all(&v.to_le_bytes())?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PolicyParams, CheckpointError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut file, &mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut word = [0u8; 4];
        read_exact(&mut file, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        for expected in LAYOUT {
            read_exact(&mut file, &mut word)?;
            let dim = u32::from_le_bytes(word) as usize;
            if dim != expected {
                return Err(CheckpointError::Layout { expected, found: dim });
            }
        }
        let mut long = [0u8; 8];
        read_exact(&mut file, &mut long)?;
        let count = u64::from_le_bytes(long) as usize;
        if count != PARAM_COUNT {
            return Err(CheckpointError::Layout { expected: PARAM_COUNT, found: count });
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            read_exact(&mut file, &mut long)?;
            data.push(f64::from_le_bytes(long));
        }
        Ok(PolicyParams { data })
    }
}

const MAGIC: &[u8; 4] = b"GTSC";
const FORMAT_VERSION: u32 = 1;
const LAYOUT: [usize; 4] = [ENCODING_LEN, HIDDEN, HIDDEN, ACTIONS];

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            CheckpointError::Truncated
        } else {
            CheckpointError::Io(e)
        }
    })
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a student checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("layout mismatch: expected {expected}, found {found}")]
    Layout { expected: usize, found: usize },
    #[error("file truncated")]
    Truncated,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate, observe, ObsCell, ObsKind, TaskKind};

    fn coeffs() -> LossCoeffs {
        LossCoeffs { clip: 0.2, value_coef: 0.5, entropy_coef: 0.001 }
    }

    fn random_encoding(rng: &mut ChaCha8Rng) -> Vec<f64> {
        let seed = rng.gen_range(0..500);
        let task = TaskKind::ALL[rng.gen_range(0..3)];
        let state = generate(task, seed).unwrap();
        encode(&observe(&state))
    }

    fn random_batch<'a>(
        encodings: &'a [Vec<f64>],
        rng: &mut ChaCha8Rng,
        with_teacher: bool,
    ) -> Vec<Sample<'a>> {
        encodings
            .iter()
            .map(|enc| {
                let teacher = with_teacher.then(|| {
                    let mut t = [0.0; ACTIONS];
                    let mut sum = 0.0;
                    for v in &mut t {
                        *v = rng.gen_range(0.0..1.0);
                        sum += *v;
                    }
                    for v in &mut t {
                        *v /= sum;
                    }
                    t
                });
                Sample {
                    encoding: enc,
                    action: rng.gen_range(0..ACTIONS),
                    advantage: rng.gen_range(-2.0..2.0),
                    return_target: rng.gen_range(0.0..1.0),
                    old_log_prob: rng.gen_range(-3.0..-0.5),
                    teacher,
                }
            })
            .collect()
    }

    #[test]
    fn encoding_has_fixed_length_and_unit_groups() {
        assert_eq!(ENCODING_LEN, 938);
        assert_eq!(PARAM_COUNT, 137_736);
        let state = generate(TaskKind::ColoredDoorKey, 3).unwrap();
        let enc = encode(&observe(&state));
        assert_eq!(enc.len(), ENCODING_LEN);
        assert!(enc.iter().all(|&v| v == 0.0 || v == 1.0));
        for cell in 0..VIEW_SIZE * VIEW_SIZE {
            let base = cell * CELL_SLOTS;
            let kind: f64 = enc[base..base + OBS_KIND_SLOTS].iter().sum();
            let color: f64 = enc[base + OBS_KIND_SLOTS..base + OBS_KIND_SLOTS + COLOR_SLOTS]
                .iter()
                .sum();
            let door: f64 = enc[base + OBS_KIND_SLOTS + COLOR_SLOTS..base + CELL_SLOTS]
                .iter()
                .sum();
            assert_eq!((kind, color, door), (1.0, 1.0, 1.0), "cell {cell}");
        }
        let carried: f64 = enc[VIEW_SIZE * VIEW_SIZE * CELL_SLOTS..].iter().sum();
        assert_eq!(carried, 1.0);
    }

    #[test]
    fn all_unseen_view_encodes_to_unseen_and_none() {
        let obs = Observation {
            view: [[ObsCell::UNSEEN; VIEW_SIZE]; VIEW_SIZE],
            carrying: None,
        };
        let enc = encode(&obs);
        for cell in 0..VIEW_SIZE * VIEW_SIZE {
            let base = cell * CELL_SLOTS;
            assert_eq!(enc[base + ObsKind::Unseen as usize], 1.0);
            assert_eq!(enc[base + OBS_KIND_SLOTS + COLOR_SLOTS - 1], 1.0);
            assert_eq!(enc[base + OBS_KIND_SLOTS + COLOR_SLOTS + DOOR_SLOTS - 1], 1.0);
        }
        assert_eq!(enc[ENCODING_LEN - 1], 1.0);
    }

    #[test]
    fn zero_params_give_uniform_policy_and_zero_value() {
        let params = PolicyParams::zeros();
        let state = generate(TaskKind::SimpleDoorKey, 1).unwrap();
        let out = params.forward(&encode(&observe(&state)));
        assert_eq!(out.logits, [0.0; ACTIONS]);
        assert_eq!(out.value, 0.0);
        for p in out.probs() {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let logits = [0.3, -1.2, 2.0, 0.0, 1.1, -0.4, 0.9];
        let shifted = logits.map(|z| z + 123.45);
        let a = softmax(&logits);
        let b = softmax(&shifted);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_finite_on_random_inputs() {
        let params = PolicyParams::seeded(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let enc = random_encoding(&mut rng);
            let out = params.forward(&enc);
            assert!(out.value.is_finite());
            assert!(out.logits.iter().all(|z| z.is_finite()));
        }
    }

    #[test]
    fn saturated_logits_dominate_sampling() {
        let mut logits = [0.0; ACTIONS];
        logits[3] = 1e6;
        let out = ActorCriticOutput { logits, value: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let (action, log_prob) = sample_action(&out, &mut rng);
            assert_eq!(action, Action::Pickup);
            assert!(log_prob.abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        let out = ActorCriticOutput { logits: [0.0; ACTIONS], value: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut counts = [0u32; ACTIONS];
        for _ in 0..n {
            let (action, _) = sample_action(&out, &mut rng);
            counts[action.index()] += 1;
        }
        let p = 1.0 / ACTIONS as f64;
        let sigma = (p * (1.0 - p) / f64::from(n)).sqrt();
        for c in counts {
            let freq = f64::from(c) / f64::from(n);
            assert!((freq - p).abs() < 3.0 * sigma, "{freq}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let params = PolicyParams::seeded(9);
        let state = generate(TaskKind::LavaDoorKey, 2).unwrap();
        let out = params.forward(&encode(&observe(&state)));
        let mut rng1 = ChaCha8Rng::seed_from_u64(77);
        let mut rng2 = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            assert_eq!(sample_action(&out, &mut rng1), sample_action(&out, &mut rng2));
        }
    }

    #[test]
    fn lambda_zero_means_no_distill_term() {
        let params = PolicyParams::seeded(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let encodings: Vec<_> = (0..4).map(|_| random_encoding(&mut rng)).collect();
        let batch = random_batch(&encodings, &mut rng, true);
        let (stats, _) = params.loss_grad(&batch, 0.0, &coeffs()).unwrap();
        assert_eq!(stats.distill, 0.0);
        let no_teacher = random_batch(&encodings, &mut rng, false);
        let (stats2, _) = params.loss_grad(&no_teacher, 0.0, &coeffs()).unwrap();
        assert_eq!(stats2.distill, 0.0);
    }

    #[test]
    fn matched_policy_has_zero_distill_gradient() {
        // uniform student (zero params) and uniform teacher: the distill
        // term equals the teacher's entropy and its gradient vanishes
        let params = PolicyParams::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let enc = random_encoding(&mut rng);
        let uniform = [1.0 / ACTIONS as f64; ACTIONS];
        let batch = [Sample {
            encoding: &enc,
            action: 0,
            advantage: 0.0,
            return_target: 0.0,
            old_log_prob: (1.0f64 / ACTIONS as f64).ln(),
            teacher: Some(uniform),
        }];
        let no_extras = LossCoeffs { clip: 0.2, value_coef: 0.0, entropy_coef: 0.0 };
        let (stats, grad) = params.loss_grad(&batch, 1.0, &no_extras).unwrap();
        assert!((stats.distill - (ACTIONS as f64).ln()).abs() < 1e-12);
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-9, "distill gradient should vanish, norm {norm}");
    }

    #[test]
    fn distill_gradient_matches_identity() {
        // the actor-head bias gradient equals softmax(logits) - teacher
        // when only the distillation term is active
        let params = PolicyParams::seeded(21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let enc = random_encoding(&mut rng);
        let mut teacher = [0.0; ACTIONS];
        let mut sum = 0.0;
        for v in &mut teacher {
            *v = rng.gen_range(0.1..1.0);
            sum += *v;
        }
        for v in &mut teacher {
            *v /= sum;
        }
        let out = params.forward(&enc);
        let batch = [Sample {
            encoding: &enc,
            action: 2,
            advantage: 0.0,
            return_target: out.value,
            old_log_prob: out.log_probs()[2],
            teacher: Some(teacher),
        }];
        let no_extras = LossCoeffs { clip: 0.2, value_coef: 0.0, entropy_coef: 0.0 };
        let (_, grad) = params.loss_grad(&batch, 1.0, &no_extras).unwrap();
        let probs = out.probs();
        for a in 0..ACTIONS {
            let expect = probs[a] - teacher[a];
            assert!(
                (grad[BA + a] - expect).abs() < 1e-8,
                "action {a}: {} vs {expect}",
                grad[BA + a]
            );
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let step = 1e-5;
        for case in 0..20 {
            let mut params = PolicyParams::seeded(1000 + case);
            let encodings: Vec<_> = (0..4).map(|_| random_encoding(&mut rng)).collect();
            let batch = random_batch(&encodings, &mut rng, case % 2 == 0);
            let lambda = if case % 2 == 0 { 0.7 } else { 0.0 };
            let (_, grad) = params.loss_grad(&batch, lambda, &coeffs()).unwrap();

            // probe coordinates spread over every layer plus random picks
            let mut probes = vec![
                W1 + 17,
                W1 + 50 * HIDDEN + 3,
                B1 + 9,
                W2 + 321,
                B2 + 60,
                WA + 100,
                BA + 4,
                WV + 77,
                BV,
            ];
            for _ in 0..30 {
                probes.push(rng.gen_range(0..PARAM_COUNT));
            }

            for idx in probes {
                let original = params.data[idx];
                params.data[idx] = original + step;
                let (plus, _) = params.loss_grad(&batch, lambda, &coeffs()).unwrap();
                params.data[idx] = original - step;
                let (minus, _) = params.loss_grad(&batch, lambda, &coeffs()).unwrap();
                params.data[idx] = original;
                let numeric = (plus.total - minus.total) / (2.0 * step);
                let analytic = grad[idx];
                let denom = analytic.abs().max(numeric.abs());
                if denom < 1e-7 {
                    continue; // both effectively zero
                }
                let rel = (analytic - numeric).abs() / denom;
                assert!(
                    rel <= 1e-4,
                    "case {case} idx {idx}: analytic {analytic} vs numeric {numeric} (rel {rel})"
                );
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let params = PolicyParams::seeded(31);
        params.save(&path).unwrap();
        let loaded = PolicyParams::load(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.bin");
        std::fs::write(&empty, b"").unwrap();
        assert!(matches!(PolicyParams::load(&empty), Err(CheckpointError::Truncated)));

        let wrong_magic = dir.path().join("magic.bin");
        std::fs::write(&wrong_magic, b"NOPE0000000000000000").unwrap();
        assert!(matches!(PolicyParams::load(&wrong_magic), Err(CheckpointError::BadMagic)));

        let path = dir.path().join("version.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(PolicyParams::load(&path), Err(CheckpointError::Version(99))));

        let truncated = dir.path().join("short.bin");
        let params = PolicyParams::seeded(1);
        params.save(&truncated).unwrap();
        let full = std::fs::read(&truncated).unwrap();
        std::fs::write(&truncated, &full[..full.len() / 2]).unwrap();
        assert!(matches!(PolicyParams::load(&truncated), Err(CheckpointError::Truncated)));
    }
}
