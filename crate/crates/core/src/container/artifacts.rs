//! Mapping between in-memory layers and containers, including the split of a
//! protected model into a deployable container and a separate keystore.
//!
//! Tensor names:
//!
//! | container | names |
//! |-----------|-------|
//! | baseline  | `{layer}.W`, `{layer}.lora.{k}.B`, `{layer}.lora.{k}.A` |
//! | deploy    | `{layer}.W_trunc`, `{layer}.adapter.{k}.B`, `{layer}.adapter.{k}.A` |
//! | keystore  | `{layer}.key.{k}.KB`, `{layer}.key.{k}.KA` |

use super::{Container, ContainerError, ContainerKind, ContainerResult, ModelMeta, TensorRole};
use crate::linalg::{Matrix, Seed};
use crate::pipeline::{EncryptedAdapter, LoraAdapter, ProtectedLayer, RestorationKey};
use crate::synth::SyntheticLayer;

/// Protected layers in layer-name order, plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedModel {
    pub master_seed: Seed,
    pub delta_r: usize,
    pub layers: Vec<(String, ProtectedLayer)>,
}

impl ProtectedModel {
    pub fn new(master_seed: Seed, delta_r: usize, mut layers: Vec<(String, ProtectedLayer)>) -> Self {
        layers.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            master_seed,
            delta_r,
            layers,
        }
    }

    pub fn layer(&self, name: &str) -> Option<&ProtectedLayer> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, l)| l)
    }
}

/// What the edge device holds for one layer: no restoration keys.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployedLayer {
    pub name: String,
    pub w_trunc: Matrix,
    pub adapters: Vec<EncryptedAdapter>,
}

fn check_kind(c: &Container, kind: ContainerKind) -> ContainerResult<()> {
    if c.meta().kind != kind {
        return Err(ContainerError::Inconsistent(format!(
            "expected a {kind:?} container, found {:?}",
            c.meta().kind
        )));
    }
    Ok(())
}

/// Splits into `(deploy, keystore)`. The deploy container holds only the
/// truncated weights and rotated adapters; the keystore only the keys.
pub fn split_artifacts(model: &ProtectedModel) -> (Container, Container) {
    let names: Vec<String> = model.layers.iter().map(|(n, _)| n.clone()).collect();
    let adapter_count = model.layers.iter().map(|(_, l)| l.num_adapters()).max().unwrap_or(0);
    let base_rank = model.layers.iter().map(|(_, l)| l.base_rank()).max().unwrap_or(0);
    let meta = |kind| ModelMeta {
        kind,
        delta_r: model.delta_r as u64,
        base_rank: base_rank as u64,
        master_seed: model.master_seed.0,
        layers: names.clone(),
        adapter_count: adapter_count as u64,
    };

    let mut deploy = Vec::new();
    let mut keys = Vec::new();
    for (name, layer) in &model.layers {
        deploy.push((
            format!("{name}.W_trunc"),
            TensorRole::WeightTrunc,
            layer.w_trunc().clone(),
        ));
        for (k, (enc, key)) in layer.adapters().iter().zip(layer.keys()).enumerate() {
            deploy.push((format!("{name}.adapter.{k}.B"), TensorRole::AdapterB, enc.b.clone()));
            deploy.push((format!("{name}.adapter.{k}.A"), TensorRole::AdapterA, enc.a.clone()));
            keys.push((format!("{name}.key.{k}.KB"), TensorRole::KeyKb, key.kb.clone()));
            keys.push((format!("{name}.key.{k}.KA"), TensorRole::KeyKa, key.ka.clone()));
        }
    }
    (
        Container::build(meta(ContainerKind::Deploy), deploy),
        Container::build(meta(ContainerKind::Keystore), keys),
    )
}

/// Reads the deployable half of each layer.
pub fn deployed_layers(deploy: &Container) -> ContainerResult<Vec<DeployedLayer>> {
    check_kind(deploy, ContainerKind::Deploy)?;
    deploy
        .meta()
        .layers
        .iter()
        .map(|name| {
            let w_trunc = deploy
                .require(&format!("{name}.W_trunc"), TensorRole::WeightTrunc)?
                .clone();
            let mut adapters = Vec::new();
            for k in 0.. {
                let b_name = format!("{name}.adapter.{k}.B");
                if deploy.get(&b_name).is_none() {
                    break;
                }
                let b = deploy.require(&b_name, TensorRole::AdapterB)?.clone();
                let a = deploy
                    .require(&format!("{name}.adapter.{k}.A"), TensorRole::AdapterA)?
                    .clone();
                adapters.push(EncryptedAdapter::new(b, a)?);
            }
            Ok(DeployedLayer {
                name: name.clone(),
                w_trunc,
                adapters,
            })
        })
        .collect()
}

/// Combines deployed parts with restoration keys into a [`ProtectedLayer`].
pub fn protected_layer_from_parts(
    deployed: DeployedLayer,
    keys: Vec<RestorationKey>,
    default_delta_r: usize,
) -> ContainerResult<ProtectedLayer> {
    let delta_r = keys.first().map_or(default_delta_r, RestorationKey::delta_r);
    Ok(ProtectedLayer::new(deployed.w_trunc, deployed.adapters, keys, delta_r)?)
}

/// Reassembles a protected model. Without a keystore, any layer that carries
/// adapters fails with [`ContainerError::MissingTensor`] naming its first key.
pub fn assemble_protected(deploy: &Container, keystore: Option<&Container>) -> ContainerResult<ProtectedModel> {
    if let Some(ks) = keystore {
        check_kind(ks, ContainerKind::Keystore)?;
        if ks.meta().layers != deploy.meta().layers {
            return Err(ContainerError::Inconsistent(
                "keystore and deploy container list different layers".into(),
            ));
        }
    }
    let meta = deploy.meta();
    let mut layers = Vec::with_capacity(meta.layers.len());
    for dl in deployed_layers(deploy)? {
        let name = dl.name.clone();
        let mut keys = Vec::with_capacity(dl.adapters.len());
        for k in 0..dl.adapters.len() {
            let kb_name = format!("{name}.key.{k}.KB");
            let ks = keystore.ok_or_else(|| ContainerError::MissingTensor(kb_name.clone()))?;
            let kb = ks.require(&kb_name, TensorRole::KeyKb)?.clone();
            let ka = ks.require(&format!("{name}.key.{k}.KA"), TensorRole::KeyKa)?.clone();
            keys.push(RestorationKey::new(kb, ka)?);
        }
        layers.push((name, protected_layer_from_parts(dl, keys, meta.delta_r as usize)?));
    }
    Ok(ProtectedModel::new(
        Seed(meta.master_seed),
        meta.delta_r as usize,
        layers,
    ))
}

/// Baseline container: original weights and task adapters.
pub fn baseline_container(layers: &[SyntheticLayer], seed: Seed) -> Container {
    let mut sorted: Vec<&SyntheticLayer> = layers.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let meta = ModelMeta {
        kind: ContainerKind::Baseline,
        delta_r: 0,
        base_rank: sorted
            .iter()
            .flat_map(|l| l.adapters.first())
            .map(|a| a.rank() as u64)
            .max()
            .unwrap_or(0),
        master_seed: seed.0,
        layers: sorted.iter().map(|l| l.name.clone()).collect(),
        adapter_count: sorted.iter().map(|l| l.adapters.len() as u64).max().unwrap_or(0),
    };
    let mut entries = Vec::new();
    for l in sorted {
        entries.push((format!("{}.W", l.name), TensorRole::BaselineW, l.w.clone()));
        for (k, ad) in l.adapters.iter().enumerate() {
            entries.push((format!("{}.lora.{k}.B", l.name), TensorRole::LoraB, ad.b().clone()));
            entries.push((format!("{}.lora.{k}.A", l.name), TensorRole::LoraA, ad.a().clone()));
        }
    }
    Container::build(meta, entries)
}

pub fn read_baseline(c: &Container) -> ContainerResult<Vec<SyntheticLayer>> {
    check_kind(c, ContainerKind::Baseline)?;
    c.meta()
        .layers
        .iter()
        .map(|name| {
            let w = c.require(&format!("{name}.W"), TensorRole::BaselineW)?.clone();
            let mut adapters = Vec::new();
            for k in 0.. {
                let b_name = format!("{name}.lora.{k}.B");
                if c.get(&b_name).is_none() {
                    break;
                }
                let b = c.require(&b_name, TensorRole::LoraB)?.clone();
                let a = c.require(&format!("{name}.lora.{k}.A"), TensorRole::LoraA)?.clone();
                adapters.push(LoraAdapter::new(b, a)?);
            }
            Ok(SyntheticLayer {
                name: name.clone(),
                w,
                adapters,
            })
        })
        .collect()
}
