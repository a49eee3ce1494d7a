use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::optim::{ema_update, Adam};
use super::{Phase, PhaseConfig, TrainConfig};
use crate::data::{shuffled_batches, Dataset};
use crate::error::{Error, Result};
use crate::losses::{
    d_hinge_loss, g_hinge_loss, gradient_penalty, l1_mean_var, masked_hinge_l1_var, DiscriminatorScorer, LossConfig,
};
use crate::model::layers::Trace;
use crate::model::{
    discriminator_forward, encoder_forward, generate_batch, generator_forward, ModelBundle, ModelConfig, LATENT_DIM,
};
use crate::nn::{ops, Bound, Graph, ParamStore, Var};
use crate::tensor::Tensor;

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Phase,
    /// 1-based index of the completed step.
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: BTreeMap<String, f64>,
}

/// Resume point stored in the bundle metadata.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseProgress {
    pub step: usize,
    pub opt_d_t: u64,
    pub opt_t: u64,
}

impl PhaseProgress {
    pub fn read(bundle: &ModelBundle, phase: Phase) -> Result<Self> {
        match bundle.meta.get("progress").and_then(|p| p.get(phase.as_str())) {
            None => Ok(Self::default()),
            Some(v) => Ok(serde_json::from_value(v.clone())?),
        }
    }

    fn write(self, bundle: &mut ModelBundle, phase: Phase) {
        if !bundle.meta.is_object() {
            bundle.meta = serde_json::json!({});
        }
        let meta = bundle.meta.as_object_mut().unwrap();
        let progress = meta.entry("progress").or_insert_with(|| serde_json::json!({}));
        progress[phase.as_str()] = serde_json::to_value(self).unwrap();
    }
}

pub type CheckpointFn<'a> = &'a mut dyn FnMut(&ModelBundle) -> Result<()>;

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Receives one JSON line per step.
    pub history: Option<&'a mut dyn Write>,
    /// Stops once this many steps of the phase are done, leaving the schedule
    /// itself unchanged; used to interrupt and resume.
    pub stop_at: Option<usize>,
    /// Called every `checkpoint_every` steps with the current state.
    pub checkpoint_every: Option<usize>,
    pub on_checkpoint: Option<CheckpointFn<'a>>,
    pub on_step: Option<&'a mut dyn FnMut(&StepRecord)>,
}

/// Whole dataset as stacked tensors for cheap batch gathering.
struct Tensors {
    x: Tensor,
    h: Tensor,
    m: Tensor,
}

impl Tensors {
    fn new(dataset: &Dataset, cfg: &ModelConfig) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        if (dataset.config.heatmap_height, dataset.config.heatmap_width) != (cfg.heatmap_height, cfg.heatmap_width) {
            return Err(Error::Config(format!(
                "dataset heatmaps are {}x{} but the model expects {}x{}",
                dataset.config.heatmap_height, dataset.config.heatmap_width, cfg.heatmap_height, cfg.heatmap_width
            )));
        }
        let s = &dataset.samples;
        Ok(Self {
            x: Tensor::stack(&s.iter().map(|p| p.rgb.to_tensor()).collect::<Vec<_>>())?,
            h: Tensor::stack(&s.iter().map(|p| p.heatmap.to_tensor()).collect::<Vec<_>>())?,
            m: Tensor::stack(&s.iter().map(|p| p.mask_hat_or_ones().to_tensor()).collect::<Vec<_>>())?,
        })
    }

    fn gather(t: &Tensor, idx: &[usize]) -> Tensor {
        let per = t.numel() / t.shape()[0];
        let mut shape = t.shape().to_vec();
        shape[0] = idx.len();
        let data = idx.iter().flat_map(|&i| t.data()[i * per..(i + 1) * per].iter().copied()).collect();
        Tensor::from_vec(&shape, data).unwrap()
    }

    fn batch(&self, idx: &[usize]) -> (Tensor, Tensor, Tensor) {
        (Self::gather(&self.x, idx), Self::gather(&self.h, idx), Self::gather(&self.m, idx))
    }
}

fn phase_tag(phase: Phase) -> u64 {
    match phase {
        Phase::Gan => 0x6761_6e00,
        Phase::Inversion => 0x696e_7600,
    }
}

/// Per-step generator stream, independent of how the run was split up.
fn step_rng(seed: u64, phase: Phase, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ phase_tag(phase));
    rng.set_stream(step as u64);
    rng
}

fn epoch_seed(seed: u64, phase: Phase, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ phase_tag(phase) ^ (epoch as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

fn sample_z(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::from_vec(&[n, LATENT_DIM], (0..n * LATENT_DIM).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

fn one() -> Tensor {
    Tensor::full(&[1], 1.0)
}

fn scalar(v: &Var) -> f64 {
    v.value().data()[0] as f64
}

/// One discriminator update on `(x_real, h)` against `x_fake`.
fn d_update(
    model: &ModelConfig,
    losses: &LossConfig,
    d: &mut ParamStore,
    opt: &mut Adam,
    (x_real, x_fake, h, m): (&Tensor, &Tensor, &Tensor, &Tensor),
    log: &mut BTreeMap<String, f64>,
) -> Result<()> {
    let g = Graph::new();
    let p = Bound::new(&g, d);
    let real = discriminator_forward(model, &p, &g.leaf(x_real.clone()), &mut Trace::Off)?;
    let fake = discriminator_forward(model, &p, &g.leaf(x_fake.clone()), &mut Trace::Off)?;
    let adv = d_hinge_loss(&real.score, &fake.score);
    let eps = losses.epsilon as f64;
    let rec_real = masked_hinge_l1_var(&real.recon, h, m, eps)?;
    let rec_fake = masked_hinge_l1_var(&fake.recon, h, m, eps)?;
    let rec = ops::scale(&ops::add(&rec_real, &rec_fake), losses.lambda_rec);
    let total = ops::add(&adv, &rec);
    let mut roots = vec![(&total, one())];
    let gp = if losses.lambda_gp > 0.0 {
        Some(gradient_penalty(&DiscriminatorScorer(model), &p, x_real, losses.lambda_gp as f64)?)
    } else {
        None
    };
    if let Some(gp) = &gp {
        roots.push(gp.root());
    }
    let grads = p.gradients(&roots);
    let r1 = gp.as_ref().map_or(0.0, |g| g.value);

    log.insert("d_adv".into(), scalar(&adv));
    log.insert("d_rec_real".into(), scalar(&rec_real));
    log.insert("d_rec_fake".into(), scalar(&rec_fake));
    log.insert("d_r1".into(), r1);
    log.insert("d_total".into(), scalar(&total) + r1);
    log.insert("d_score_real".into(), real.score.value().sum() / x_real.shape()[0] as f64);
    log.insert("d_score_fake".into(), fake.score.value().sum() / x_fake.shape()[0] as f64);
    drop(roots);
    drop(p);
    opt.step(d, &grads)
}

fn check_finite(step: usize, log: &BTreeMap<String, f64>) -> Result<()> {
    match log.iter().find(|(_, v)| !v.is_finite()) {
        Some((k, v)) => Err(Error::Divergence { step, detail: format!("{k} = {v}") }),
        None => Ok(()),
    }
}

fn load_adam(bundle: &ModelBundle, key: &str, params: &ParamStore, pc: &PhaseConfig, lr: f32, t: u64) -> Result<Adam> {
    let mut opt = Adam::new(params, lr, pc.beta1, pc.beta2);
    if t > 0 {
        let (Some(m), Some(v)) = (bundle.extra.get(&format!("{key}/m")), bundle.extra.get(&format!("{key}/v"))) else {
            return Err(Error::Format(format!("checkpoint lacks optimizer state `{key}`")));
        };
        params.check_layout(m)?;
        params.check_layout(v)?;
        opt.m = m.clone();
        opt.v = v.clone();
        opt.t = t;
    }
    Ok(opt)
}

fn store_adam(bundle: &mut ModelBundle, key: &str, opt: &Adam) {
    bundle.extra.insert(format!("{key}/m"), opt.m.clone());
    bundle.extra.insert(format!("{key}/v"), opt.v.clone());
}

struct Driver<'o, 'a> {
    phase: Phase,
    seed: u64,
    pc: PhaseConfig,
    n: usize,
    opts: &'o mut RunOptions<'a>,
}

impl Driver<'_, '_> {
    fn batch_indices(&self, step: usize) -> (usize, Vec<usize>) {
        let spe = self.pc.steps_per_epoch(self.n);
        let epoch = step / spe;
        let batches = shuffled_batches(self.n, self.pc.batch_size, epoch_seed(self.seed, self.phase, epoch));
        (epoch, batches[step % spe].clone())
    }

    fn end(&self) -> usize {
        let total = self.pc.total_steps(self.n);
        self.opts.stop_at.map_or(total, |s| s.min(total))
    }

    fn emit(&mut self, record: &StepRecord) -> Result<()> {
        if let Some(w) = self.opts.history.as_mut() {
            let line = serde_json::to_string(record)?;
            writeln!(w, "{line}").map_err(|e| Error::io("<history>", e))?;
        }
        if let Some(f) = self.opts.on_step.as_mut() {
            f(record);
        }
        Ok(())
    }

    fn checkpoint(&mut self, step: usize, bundle: &ModelBundle) -> Result<()> {
        if let (Some(every), Some(f)) = (self.opts.checkpoint_every, self.opts.on_checkpoint.as_mut()) {
            if every > 0 && step.is_multiple_of(every) {
                f(bundle)?;
            }
        }
        Ok(())
    }
}

/// GAN phase. Continues from the progress recorded in `bundle.meta`, so a
/// checkpoint produced mid-run resumes exactly.
pub fn train_gan(dataset: &Dataset, bundle: &mut ModelBundle, cfg: &TrainConfig, mut opts: RunOptions) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    let model = bundle.config.clone();
    let data = Tensors::new(dataset, &model)?;
    let pc = cfg.gan.clone();
    let progress = PhaseProgress::read(bundle, Phase::Gan)?;
    let mut opt_d = load_adam(bundle, "gan/adam_d", &bundle.discriminator, &pc, pc.lr_d, progress.opt_d_t)?;
    let mut opt_g = load_adam(bundle, "gan/adam_g", &bundle.generator, &pc, pc.lr_g_or_i, progress.opt_t)?;
    let mut driver = Driver { phase: Phase::Gan, seed: cfg.seed, pc: pc.clone(), n: dataset.len(), opts: &mut opts };
    let losses = &cfg.losses;
    let eps = losses.epsilon as f64;
    let mut history = Vec::new();

    for step in progress.step..driver.end() {
        let (epoch, idx) = driver.batch_indices(step);
        let (x, h, m) = data.batch(&idx);
        let b = idx.len();
        let mut rng = step_rng(cfg.seed, Phase::Gan, step);
        let mut log = BTreeMap::new();

        for _ in 0..pc.update_ratio {
            let x_fake = generate_batch(&model, &bundle.generator, &sample_z(&mut rng, b), &h)?;
            d_update(&model, losses, &mut bundle.discriminator, &mut opt_d, (&x, &x_fake, &h, &m), &mut log)?;
        }

        let grads = {
            let g = Graph::new();
            let pg = Bound::new(&g, &bundle.generator);
            let pd = Bound::new(&g, &bundle.discriminator);
            let x_fake = generator_forward(&model, &pg, &g.leaf(sample_z(&mut rng, b)), &g.leaf(h.clone()))?;
            let out = discriminator_forward(&model, &pd, &x_fake, &mut Trace::Off)?;
            let adv = g_hinge_loss(&out.score);
            let rec = masked_hinge_l1_var(&out.recon, &h, &m, eps)?;
            let total = ops::add(&adv, &ops::scale(&rec, losses.lambda_rec));
            log.insert("g_adv".into(), scalar(&adv));
            log.insert("g_rec".into(), scalar(&rec));
            log.insert("g_total".into(), scalar(&total));
            pg.gradients(&[(&total, one())])
        };
        check_finite(step + 1, &log)?;
        opt_g.step(&mut bundle.generator, &grads)?;
        ema_update(&mut bundle.ema_generator, &bundle.generator, pc.ema_decay)?;

        let record = StepRecord { phase: Phase::Gan, step: step + 1, epoch, losses: log };
        driver.emit(&record)?;
        history.push(record);

        PhaseProgress { step: step + 1, opt_d_t: opt_d.t, opt_t: opt_g.t }.write(bundle, Phase::Gan);
        store_adam(bundle, "gan/adam_d", &opt_d);
        store_adam(bundle, "gan/adam_g", &opt_g);
        driver.checkpoint(step + 1, bundle)?;
    }
    Ok(history)
}

/// Inversion phase: fits `I` so that `G_ema(I(x), h) ≈ x` with `G` frozen,
/// optionally continuing to train `D` on real versus reconstructed images.
pub fn train_inversion(dataset: &Dataset, bundle: &mut ModelBundle, cfg: &TrainConfig, mut opts: RunOptions) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    if PhaseProgress::read(bundle, Phase::Gan)?.step == 0 {
        return Err(Error::Config("bundle has no trained generator; run the GAN phase first".into()));
    }
    let model = bundle.config.clone();
    let data = Tensors::new(dataset, &model)?;
    let pc = cfg.inversion.clone();
    let progress = PhaseProgress::read(bundle, Phase::Inversion)?;
    let mut opt_i = load_adam(bundle, "inversion/adam_i", &bundle.encoder, &pc, pc.lr_g_or_i, progress.opt_t)?;
    let mut opt_d = load_adam(bundle, "inversion/adam_d", &bundle.discriminator, &pc, pc.lr_d, progress.opt_d_t)?;
    let mut driver = Driver { phase: Phase::Inversion, seed: cfg.seed, pc: pc.clone(), n: dataset.len(), opts: &mut opts };
    let losses = &cfg.losses;
    let mut history = Vec::new();

    for step in progress.step..driver.end() {
        let (epoch, idx) = driver.batch_indices(step);
        let (x, h, m) = data.batch(&idx);
        let mut log = BTreeMap::new();

        let (grads, x_rec) = {
            let g = Graph::new();
            let pi = Bound::new(&g, &bundle.encoder);
            let pg = Bound::new(&g, &bundle.ema_generator);
            let z = encoder_forward(&model, &pi, &g.leaf(x.clone()))?;
            let x_rec = generator_forward(&model, &pg, &z, &g.leaf(h.clone()))?;
            let l1 = l1_mean_var(&x_rec, &x)?;
            let mut total = ops::scale(&l1, losses.lambda_inv);
            log.insert("inv_l1".into(), scalar(&l1));
            if losses.feature_matching {
                let pd = Bound::new(&g, &bundle.discriminator);
                let f_real = discriminator_forward(&model, &pd, &g.leaf(x.clone()), &mut Trace::Off)?.features;
                let f_fake = discriminator_forward(&model, &pd, &x_rec, &mut Trace::Off)?.features;
                let fm = l1_mean_var(&f_fake, f_real.value())?;
                log.insert("inv_fm".into(), scalar(&fm));
                total = ops::add(&total, &ops::scale(&fm, losses.lambda_fm));
            }
            log.insert("inv_total".into(), scalar(&total));
            (pi.gradients(&[(&total, one())]), x_rec.value().clone())
        };
        check_finite(step + 1, &log)?;
        opt_i.step(&mut bundle.encoder, &grads)?;
        ema_update(&mut bundle.ema_encoder, &bundle.encoder, pc.ema_decay)?;

        if cfg.inversion_trains_d {
            for _ in 0..pc.update_ratio {
                d_update(&model, losses, &mut bundle.discriminator, &mut opt_d, (&x, &x_rec, &h, &m), &mut log)?;
            }
            check_finite(step + 1, &log)?;
        }

        let record = StepRecord { phase: Phase::Inversion, step: step + 1, epoch, losses: log };
        driver.emit(&record)?;
        history.push(record);

        PhaseProgress { step: step + 1, opt_d_t: opt_d.t, opt_t: opt_i.t }.write(bundle, Phase::Inversion);
        store_adam(bundle, "inversion/adam_i", &opt_i);
        if cfg.inversion_trains_d {
            store_adam(bundle, "inversion/adam_d", &opt_d);
        }
        driver.checkpoint(step + 1, bundle)?;
    }
    Ok(history)
}
