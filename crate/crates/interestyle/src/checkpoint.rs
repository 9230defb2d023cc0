//! Training checkpoints: frozen generator and proxy, `w0`, encoder, optimizer
//! state and the resolved configuration in one container file.

use std::path::Path;

use interestyle_core::encoder::EncoderParams;
use interestyle_core::nn::{load_named, ParamTree};
use interestyle_core::objective::ProxyFeatureNet;
use interestyle_core::optim::Adam;
use interestyle_core::synthgen::{GeneratorParams, IMAGE_CHANNELS};
use interestyle_core::trainloop::{Frozen, Trainer};
use interestyle_core::{StyleLatent, Tensor};

use crate::config::RunConfig;
use crate::container::ArrayContainer;
use crate::error::{format_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub gen: GeneratorParams,
    pub proxy: ProxyFeatureNet,
    pub w0: StyleLatent,
    pub trainer: Trainer,
}

fn put<N: ParamTree<Tensor>>(c: &mut ArrayContainer, prefix: &str, net: &N) {
    net.visit(prefix, &mut |name, t| c.insert_tensor(name, t));
}

fn take<N: ParamTree<Tensor>>(c: &ArrayContainer, prefix: &str, net: &mut N) -> Result<()> {
    load_named(net, prefix, &mut |name| c.tensor(name))?;
    Ok(())
}

impl Checkpoint {
    /// Fresh state for a configuration: seeded networks, zero-output encoder heads and `w0`.
    pub fn init(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let gen = GeneratorParams::new(config.generator()?)?;
        let proxy = ProxyFeatureNet::new(config.proxy()?, IMAGE_CHANNELS)?;
        let train = config.train()?;
        let w0 = gen.average_latent(train.w0_samples, train.data_seed)?;
        let encoder = EncoderParams::new(config.encoder()?)?;
        let trainer = Trainer::new(train, encoder)?;
        Ok(Checkpoint {
            config: config.clone(),
            gen,
            proxy,
            w0,
            trainer,
        })
    }

    pub fn frozen(&self) -> Frozen<'_> {
        Frozen {
            gen: &self.gen,
            net: &self.proxy,
            w0: &self.w0,
        }
    }

    pub fn encoder(&self) -> &EncoderParams {
        &self.trainer.encoder
    }

    pub fn to_container(&self) -> ArrayContainer {
        let mut c = ArrayContainer::new();
        c.insert_bytes("config_json", self.config.to_json().as_bytes());
        c.insert_tensor("w0", self.w0.tensor());
        put(&mut c, "generator", &self.gen.net);
        put(&mut c, "proxy", &self.proxy.net);
        put(&mut c, "encoder", &self.trainer.encoder.net);
        let mut i = 0;
        let opt = &self.trainer.optimizer;
        self.trainer.encoder.net.visit("", &mut |name, _| {
            c.insert_tensor(format!("optimizer/m/{name}"), &opt.m[i]);
            c.insert_tensor(format!("optimizer/v/{name}"), &opt.v[i]);
            i += 1;
        });
        c.insert_u64("optimizer/t", opt.t);
        c.insert_u64("train/step", self.trainer.step);
        c
    }

    pub fn from_container(c: &ArrayContainer, origin: &Path) -> Result<Self> {
        let json = c
            .bytes("config_json")
            .ok_or_else(|| format_err(origin, "checkpoint lacks config_json"))?;
        let json = std::str::from_utf8(json).map_err(|_| format_err(origin, "config_json is not UTF-8"))?;
        let config = RunConfig::from_json(json)?;
        let mut gen = GeneratorParams::new(config.generator()?)?;
        take(c, "generator", &mut gen.net)?;
        let mut proxy = ProxyFeatureNet::new(config.proxy()?, IMAGE_CHANNELS)?;
        take(c, "proxy", &mut proxy.net)?;
        let w0 = StyleLatent::from_tensor(c.tensor("w0").ok_or_else(|| format_err(origin, "checkpoint lacks w0"))?)?;
        let mut encoder = EncoderParams::new(config.encoder()?)?;
        take(c, "encoder", &mut encoder.net)?;
        let mut optimizer = Adam::new(&encoder.net);
        let mut missing = None;
        let mut i = 0;
        encoder.net.visit("", &mut |name, _| {
            match (c.tensor(&format!("optimizer/m/{name}")), c.tensor(&format!("optimizer/v/{name}"))) {
                (Some(m), Some(v)) if m.dims() == optimizer.m[i].dims() && v.dims() == optimizer.v[i].dims() => {
                    optimizer.m[i] = m;
                    optimizer.v[i] = v;
                }
                _ => missing = Some(name.to_string()),
            }
            i += 1;
        });
        if let Some(name) = missing {
            return Err(format_err(origin, format!("optimizer state for {name} missing or misshapen")));
        }
        optimizer.t = c.u64("optimizer/t").ok_or_else(|| format_err(origin, "checkpoint lacks optimizer/t"))?;
        let mut trainer = Trainer::new(config.train()?, encoder)?;
        trainer.optimizer = optimizer;
        trainer.step = c.u64("train/step").ok_or_else(|| format_err(origin, "checkpoint lacks train/step"))?;
        Ok(Checkpoint {
            config,
            gen,
            proxy,
            w0,
            trainer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&ArrayContainer::load(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_text("model.channels = 4,3\nmodel.z_dim = 8\nmodel.latent_dim = 8\nmodel.mapping_layers = 1\ntrain.w0_samples = 8\nmodel.proxy_channels = 3,4\n")
            .unwrap();
        c
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ck = Checkpoint::init(&small()).unwrap();
        ck.trainer.step = 7;
        ck.trainer.optimizer.t = 7;
        ck.trainer.optimizer.m[0] = Tensor::filled(ck.trainer.optimizer.m[0].dims(), 0.5);
        let p = dir.path().join("c.ckpt");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        let p2 = dir.path().join("d.ckpt");
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }
}
