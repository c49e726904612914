//! Alternating generator/discriminator training.
//!
//! Each iteration runs one discriminator update (real plus fake) followed by
//! one generator update (adversarial plus weighted reconstruction), both
//! with Adam. Batches are processed by gradient accumulation over the
//! samples, so results do not depend on how samples are packed. Everything
//! is seeded: two runs with the same seed produce bitwise-identical traces.

use super::discriminator::{Discriminator, JUDGED_CHANNEL_OFFSET};
use super::generator::{GenCtx, Generator, SkipFeed};
use super::{clamp_score, GeneratorConfig, ReconKind, SkipMode, TrainConfig, TrainSample};
use crate::error::{Error, Result};
use crate::nn::{stream_seed, Mode};
use crate::nnloss::{
    l1_loss, l1_loss_backward, nn_loss_backward, nn_loss_shifted, perceptual_elementwise_loss,
    FeatureExtractor, NeighborhoodSpec, EXTRACTOR_SEED,
};
use crate::optim::{adam_step, scale_grads};
use crate::optim::ParamStore;
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss_d: f64,
    pub loss_g_adv: f64,
    pub recon: f64,
}

pub struct Trainer {
    pub gen: Generator,
    pub disc: Discriminator,
    pub g_params: ParamStore,
    pub d_params: ParamStore,
    pub cfg: TrainConfig,
    pub extractor: FeatureExtractor,
    pub iteration: u64,
}

impl Trainer {
    pub fn new(gcfg: GeneratorConfig, cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let extractor =
            FeatureExtractor::new_random(EXTRACTOR_SEED, FeatureExtractor::default_channels());
        Self::with_extractor(gcfg, cfg, extractor)
    }

    pub fn with_extractor(
        gcfg: GeneratorConfig,
        cfg: TrainConfig,
        extractor: FeatureExtractor,
    ) -> Result<Trainer> {
        cfg.validate()?;
        let gen = Generator::new(gcfg)?;
        let disc = Discriminator::new(gcfg.image_h, gcfg.image_w, gcfg.divisor)?;
        let g_params = gen.init_params(cfg.seed);
        let d_params = disc.init_params(cfg.seed);
        Ok(Trainer { gen, disc, g_params, d_params, cfg, extractor, iteration: 0 })
    }

    /// Rebuilds a trainer around restored parameters (checkpoint resume).
    pub fn from_state(
        gcfg: GeneratorConfig,
        cfg: TrainConfig,
        g_params: ParamStore,
        d_params: ParamStore,
        extractor: FeatureExtractor,
        iteration: u64,
    ) -> Result<Trainer> {
        cfg.validate()?;
        let gen = Generator::new(gcfg)?;
        let disc = Discriminator::new(gcfg.image_h, gcfg.image_w, gcfg.divisor)?;
        Ok(Trainer { gen, disc, g_params, d_params, cfg, extractor, iteration })
    }

    fn feed<'a>(&self, sample: &'a TrainSample) -> SkipFeed<'a> {
        match self.gen.cfg.skip {
            SkipMode::Deformable => SkipFeed::Deformed(&sample.plans),
            _ => SkipFeed::Direct,
        }
    }

    /// Eval-mode generation (no dropout noise).
    pub fn generate_eval(&self, sample: &TrainSample) -> Result<FeatureMap> {
        let (out, _) = self.gen.forward(
            &self.g_params,
            &sample.x_a,
            &sample.h_a,
            &sample.h_b,
            self.feed(sample),
            Mode::Eval,
            0,
        )?;
        Ok(out)
    }

    /// Eval-mode reconstruction loss of the current generator on a sample.
    pub fn recon_eval(&self, sample: &TrainSample) -> Result<f64> {
        let x_hat = self.generate_eval(sample)?;
        let (loss, _) = self.recon_loss_and_grad(&x_hat, &sample.x_b)?;
        Ok(loss)
    }

    pub fn train_step(&mut self, batch: &[&TrainSample]) -> Result<StepLosses> {
        self.train_step_parts(batch, true, true)
    }

    /// One iteration with either update optionally frozen (used by
    /// diagnostics and tests).
    pub fn train_step_parts(
        &mut self,
        batch: &[&TrainSample],
        update_d: bool,
        update_g: bool,
    ) -> Result<StepLosses> {
        if batch.is_empty() {
            return Err(Error::invalid_argument("empty training batch"));
        }
        let iter = self.iteration;
        let inv_b = 1.0 / batch.len() as f64;

        // one train-mode generator pass per sample; contexts serve both the
        // discriminator update (value only) and the generator update
        let mut fakes: Vec<(FeatureMap, GenCtx)> = Vec::with_capacity(batch.len());
        for (j, sample) in batch.iter().enumerate() {
            let seed = stream_seed(self.cfg.seed, iter, j as u64);
            fakes.push(self.gen.forward(
                &self.g_params,
                &sample.x_a,
                &sample.h_a,
                &sample.h_b,
                self.feed(sample),
                Mode::Train,
                seed,
            )?);
        }

        let mut loss_d_sum = 0.0;
        if update_d {
            let mut dgrads = self.d_params.zero_grads();
            for (sample, (x_hat, _)) in batch.iter().zip(fakes.iter()) {
                let (d_real, ctx_real) = self.disc.forward(
                    &self.d_params,
                    &sample.x_a,
                    &sample.h_a,
                    &sample.x_b,
                    &sample.h_b,
                )?;
                let (d_fake, ctx_fake) = self.disc.forward(
                    &self.d_params,
                    &sample.x_a,
                    &sample.h_a,
                    x_hat,
                    &sample.h_b,
                )?;
                let dr = clamp_score(d_real);
                let df = clamp_score(d_fake);
                loss_d_sum += -dr.ln() - (1.0 - df).ln();
                self.disc.backward(&self.d_params, &ctx_real, -1.0 / dr, &mut dgrads)?;
                self.disc.backward(&self.d_params, &ctx_fake, 1.0 / (1.0 - df), &mut dgrads)?;
            }
            self.check_finite(loss_d_sum, "discriminator loss")?;
            scale_grads(&mut dgrads, inv_b);
            adam_step(&mut self.d_params, &dgrads, &self.cfg.adam)?;
        }

        let mut adv_sum = 0.0;
        let mut recon_sum = 0.0;
        if update_g {
            let mut ggrads = self.g_params.zero_grads();
            for (sample, (x_hat, gen_ctx)) in batch.iter().zip(fakes.iter()) {
                // fresh discriminator pass against the just-updated weights
                let (d_fake, ctx) = self.disc.forward(
                    &self.d_params,
                    &sample.x_a,
                    &sample.h_a,
                    x_hat,
                    &sample.h_b,
                )?;
                let df = clamp_score(d_fake);
                adv_sum += -df.ln();
                let mut d_scratch = self.d_params.zero_grads();
                let gin = self.disc.backward(&self.d_params, &ctx, -1.0 / df, &mut d_scratch)?;
                let mut grad_x_hat = gin
                    .to_single(0)
                    .slice_channels(JUDGED_CHANNEL_OFFSET, JUDGED_CHANNEL_OFFSET + 3);

                let (recon, grad_recon) = self.recon_loss_and_grad(x_hat, &sample.x_b)?;
                recon_sum += recon;
                for (g, r) in grad_x_hat.data.iter_mut().zip(grad_recon.data.iter()) {
                    *g += self.cfg.lambda * r;
                }
                self.gen.backward(
                    &self.g_params,
                    gen_ctx,
                    self.feed(sample),
                    &grad_x_hat,
                    &mut ggrads,
                )?;
            }
            self.check_finite(adv_sum, "adversarial generator loss")?;
            self.check_finite(recon_sum, "reconstruction loss")?;
            scale_grads(&mut ggrads, inv_b);
            adam_step(&mut self.g_params, &ggrads, &self.cfg.adam)?;
        }

        self.iteration += 1;
        Ok(StepLosses {
            loss_d: loss_d_sum * inv_b,
            loss_g_adv: adv_sum * inv_b,
            recon: recon_sum * inv_b,
        })
    }

    fn check_finite(&self, value: f64, what: &str) -> Result<()> {
        if value.is_finite() {
            Ok(())
        } else {
            Err(Error::TrainingDiverged {
                iteration: self.iteration,
                message: format!("{what} is {value}"),
            })
        }
    }

    /// Reconstruction loss for the configured kind and its gradient with
    /// respect to the generated image.
    pub fn recon_loss_and_grad(
        &self,
        x_hat: &FeatureMap,
        x_b: &FeatureMap,
    ) -> Result<(f64, FeatureMap)> {
        match self.cfg.variant.recon_kind() {
            ReconKind::L1 => {
                let loss = l1_loss(x_hat, x_b)?;
                let grad = l1_loss_backward(1.0, x_hat, x_b)?;
                Ok((loss, grad))
            }
            ReconKind::Perceptual => {
                let (f_hat, ctx) = self.extractor.forward(x_hat);
                let f_b = self.extractor.extract(x_b);
                let loss = perceptual_elementwise_loss(&f_hat, &f_b)?;
                let grad_feat = l1_loss_backward(1.0, &f_hat, &f_b)?;
                Ok((loss, self.extractor.backward(&ctx, &grad_feat)?))
            }
            ReconKind::NearestNeighbor => {
                let nb = NeighborhoodSpec::new(self.cfg.neighborhood)?;
                let (f_hat, ctx) = self.extractor.forward(x_hat);
                let f_b = self.extractor.extract(x_b);
                let (loss, argmin) = nn_loss_shifted(&f_hat, &f_b, nb)?;
                let grad_feat = nn_loss_backward(1.0, &argmin, &f_hat, &f_b)?;
                Ok((loss, self.extractor.backward(&ctx, &grad_feat)?))
            }
        }
    }

    /// Runs the schedule: each iteration takes the next `batch_size` samples
    /// cyclically from the dataset (stateless in the iteration index, so a
    /// resumed run continues exactly where it stopped).
    pub fn run<F>(&mut self, dataset: &[TrainSample], iterations: u64, mut on_iter: F) -> Result<()>
    where
        F: FnMut(u64, &StepLosses) -> Result<()>,
    {
        if dataset.is_empty() {
            return Err(Error::invalid_argument("empty dataset"));
        }
        for _ in 0..iterations {
            let iter = self.iteration;
            let batch: Vec<&TrainSample> = (0..self.cfg.batch_size)
                .map(|j| {
                    let idx = (iter as usize * self.cfg.batch_size + j) % dataset.len();
                    &dataset[idx]
                })
                .collect();
            let losses = self.train_step(&batch)?;
            on_iter(iter, &losses)?;
        }
        Ok(())
    }
}
