//! Training checkpoints on top of the tensor container: every parameter and
//! optimizer tensor plus the run configuration, bit-exact across round
//! trips.

use super::container::TensorContainer;
use crate::error::{Error, Result};
use crate::gan::{GeneratorConfig, SkipMode, TrainConfig, Trainer, Variant};
use crate::optim::{AdamHyper, ParamStore};
use crate::tensor::Tensor;
use std::path::Path;

const VERSION: f64 = 1.0;

#[derive(Debug)]
pub struct Checkpoint {
    pub gcfg: GeneratorConfig,
    pub cfg: TrainConfig,
    pub g_params: ParamStore,
    pub d_params: ParamStore,
    pub iteration: u64,
}

fn skip_code(mode: SkipMode) -> f64 {
    match mode {
        SkipMode::None => 0.0,
        SkipMode::Plain => 1.0,
        SkipMode::Deformable => 2.0,
    }
}

fn skip_from_code(code: f64) -> Result<SkipMode> {
    match code as i64 {
        0 => Ok(SkipMode::None),
        1 => Ok(SkipMode::Plain),
        2 => Ok(SkipMode::Deformable),
        other => Err(Error::IncompatibleCheckpoint(format!("unknown skip code {other}"))),
    }
}

fn push_scalar(c: &mut TensorContainer, name: &str, value: f64) -> Result<()> {
    c.push_f64(name, &[1], vec![value])
}

fn read_scalar(c: &TensorContainer, name: &str) -> Result<f64> {
    let entry = c.require(name)?;
    let data = entry.data.to_f64();
    if data.len() != 1 {
        return Err(Error::IncompatibleCheckpoint(format!("{name} is not a scalar")));
    }
    Ok(data[0])
}

fn push_store(c: &mut TensorContainer, prefix: &str, store: &ParamStore) -> Result<()> {
    push_scalar(c, &format!("meta.{prefix}_step"), store.step() as f64)?;
    for (name, entry) in store.iter() {
        c.push_tensor(format!("param.{name}"), &entry.value)?;
        c.push_tensor(format!("adam.m.{name}"), &entry.m)?;
        c.push_tensor(format!("adam.v.{name}"), &entry.v)?;
    }
    Ok(())
}

/// Restores a parameter store for names starting with `head.` (e.g. `g.`),
/// verifying that every expected tensor is present with matching shape.
fn read_store(c: &TensorContainer, head: &str, step_key: &str, template: &ParamStore) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, entry) in template.iter() {
        debug_assert!(name.starts_with(head));
        let value = c.require(&format!("param.{name}"))?.to_tensor();
        let m = c.require(&format!("adam.m.{name}"))?.to_tensor();
        let v = c.require(&format!("adam.v.{name}"))?.to_tensor();
        for (what, t) in [("param", &value), ("adam.m", &m), ("adam.v", &v)] {
            if t.dims != entry.value.dims {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "{what}.{name} has dims {:?}, expected {:?}",
                    t.dims, entry.value.dims
                )));
            }
        }
        store.insert(name.clone(), value);
        let slot = store.entry_mut(name).unwrap();
        slot.m = m;
        slot.v = v;
    }
    store.set_step(read_scalar(c, step_key)? as u64);
    Ok(store)
}

pub fn save_checkpoint(path: impl AsRef<Path>, trainer: &Trainer) -> Result<()> {
    let mut c = TensorContainer::new();
    push_scalar(&mut c, "meta.version", VERSION)?;
    push_scalar(&mut c, "meta.iteration", trainer.iteration as f64)?;
    let cfg = &trainer.cfg;
    push_scalar(&mut c, "cfg.variant", cfg.variant.code() as f64)?;
    push_scalar(&mut c, "cfg.iterations", cfg.iterations as f64)?;
    push_scalar(&mut c, "cfg.lambda", cfg.lambda)?;
    push_scalar(&mut c, "cfg.neighborhood", cfg.neighborhood as f64)?;
    push_scalar(&mut c, "cfg.lr", cfg.adam.lr)?;
    push_scalar(&mut c, "cfg.beta1", cfg.adam.beta1)?;
    push_scalar(&mut c, "cfg.beta2", cfg.adam.beta2)?;
    push_scalar(&mut c, "cfg.eps", cfg.adam.eps)?;
    push_scalar(&mut c, "cfg.batch_size", cfg.batch_size as f64)?;
    push_scalar(&mut c, "cfg.seed_hi", (cfg.seed >> 32) as f64)?;
    push_scalar(&mut c, "cfg.seed_lo", (cfg.seed & 0xFFFF_FFFF) as f64)?;
    push_scalar(&mut c, "cfg.sigma", cfg.sigma)?;
    let gcfg = &trainer.gen.cfg;
    push_scalar(&mut c, "gen.image_h", gcfg.image_h as f64)?;
    push_scalar(&mut c, "gen.image_w", gcfg.image_w as f64)?;
    push_scalar(&mut c, "gen.divisor", gcfg.divisor as f64)?;
    push_scalar(&mut c, "gen.extra_block", if gcfg.extra_block { 1.0 } else { 0.0 })?;
    push_scalar(&mut c, "gen.two_stream", if gcfg.two_stream { 1.0 } else { 0.0 })?;
    push_scalar(&mut c, "gen.skip", skip_code(gcfg.skip))?;
    push_store(&mut c, "g", &trainer.g_params)?;
    push_store(&mut c, "d", &trainer.d_params)?;
    c.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let c = TensorContainer::load(path).map_err(|e| match e {
        Error::Parse(msg) => Error::IncompatibleCheckpoint(msg),
        other => other,
    })?;
    let version = read_scalar(&c, "meta.version")?;
    if version != VERSION {
        return Err(Error::IncompatibleCheckpoint(format!(
            "checkpoint version {version}, expected {VERSION}"
        )));
    }
    let variant = Variant::from_code(read_scalar(&c, "cfg.variant")? as u8)?;
    let seed_hi = read_scalar(&c, "cfg.seed_hi")? as u64;
    let seed_lo = read_scalar(&c, "cfg.seed_lo")? as u64;
    let cfg = TrainConfig {
        variant,
        iterations: read_scalar(&c, "cfg.iterations")? as u64,
        lambda: read_scalar(&c, "cfg.lambda")?,
        neighborhood: read_scalar(&c, "cfg.neighborhood")? as usize,
        adam: AdamHyper {
            lr: read_scalar(&c, "cfg.lr")?,
            beta1: read_scalar(&c, "cfg.beta1")?,
            beta2: read_scalar(&c, "cfg.beta2")?,
            eps: read_scalar(&c, "cfg.eps")?,
        },
        batch_size: read_scalar(&c, "cfg.batch_size")? as usize,
        seed: (seed_hi << 32) | seed_lo,
        sigma: read_scalar(&c, "cfg.sigma")?,
    };
    let gcfg = GeneratorConfig {
        image_h: read_scalar(&c, "gen.image_h")? as usize,
        image_w: read_scalar(&c, "gen.image_w")? as usize,
        divisor: read_scalar(&c, "gen.divisor")? as usize,
        extra_block: read_scalar(&c, "gen.extra_block")? != 0.0,
        two_stream: read_scalar(&c, "gen.two_stream")? != 0.0,
        skip: skip_from_code(read_scalar(&c, "gen.skip")?)?,
    };
    // template stores give the expected names and shapes
    let probe = Trainer::new(gcfg, cfg.clone()).map_err(|e| {
        Error::IncompatibleCheckpoint(format!("cannot rebuild networks: {e}"))
    })?;
    let g_params = read_store(&c, "g.", "meta.g_step", &probe.g_params)?;
    let d_params = read_store(&c, "d.", "meta.d_step", &probe.d_params)?;
    Ok(Checkpoint {
        gcfg,
        cfg,
        g_params,
        d_params,
        iteration: read_scalar(&c, "meta.iteration")? as u64,
    })
}

impl Checkpoint {
    /// Rebuilds a trainer ready to resume.
    pub fn into_trainer(self) -> Result<Trainer> {
        let extractor = crate::nnloss::FeatureExtractor::new_random(
            crate::nnloss::EXTRACTOR_SEED,
            crate::nnloss::FeatureExtractor::default_channels(),
        );
        Trainer::from_state(self.gcfg, self.cfg, self.g_params, self.d_params, extractor, self.iteration)
    }
}

/// Loads extractor weights from a tensor container holding conv1.weight,
/// conv1.bias, conv2.weight, conv2.bias.
pub fn load_extractor_weights(path: impl AsRef<Path>) -> Result<crate::nnloss::FeatureExtractor> {
    let c = TensorContainer::load(path)?;
    let get = |name: &str| -> Result<Tensor> { Ok(c.require(name)?.to_tensor()) };
    crate::nnloss::FeatureExtractor::from_tensors(
        get("conv1.weight")?,
        get("conv1.bias")?,
        get("conv2.weight")?,
        get("conv2.bias")?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::build_variant;

    fn small_trainer() -> Trainer {
        let (mut gcfg, mut cfg) = build_variant(Variant::Full);
        gcfg.divisor = 64;
        cfg.batch_size = 1;
        cfg.seed = 0xDEAD_BEEF_1234_5678;
        Trainer::new(gcfg, cfg).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let trainer = small_trainer();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&p1, &trainer).unwrap();
        let restored = load_checkpoint(&p1).unwrap().into_trainer().unwrap();
        assert_eq!(restored.cfg, trainer.cfg);
        assert_eq!(restored.g_params, trainer.g_params);
        assert_eq!(restored.d_params, trainer.d_params);
        save_checkpoint(&p2, &restored).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn truncated_checkpoint_is_incompatible() {
        let trainer = small_trainer();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        save_checkpoint(&path, &trainer).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::IncompatibleCheckpoint(_))
        ));
    }

    #[test]
    fn missing_entries_are_incompatible() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ckpt");
        TensorContainer::new().save(&path).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::IncompatibleCheckpoint(_))
        ));
    }
}
