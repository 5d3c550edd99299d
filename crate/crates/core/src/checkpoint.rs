//! Persistence of trained networks with arbitrary metadata.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec, Parameters};

const CHECKPOINT_KIND: &str = "risgan-checkpoint";

#[derive(Serialize, Deserialize)]
struct CheckpointBody<M> {
    meta: M,
    specs: Vec<NetworkSpec>,
    lengths: Vec<usize>,
}

/// Writes `networks` (layouts in the header, every stored value in the
/// payload) together with `meta`.
pub fn save_checkpoint<M: Serialize + DeserializeOwned>(
    path: &Path,
    meta: &M,
    networks: &[&Network],
) -> Result<()> {
    let mut payload = Vec::new();
    let mut lengths = Vec::with_capacity(networks.len());
    for net in networks {
        let flat = net.params.to_flat();
        lengths.push(flat.len());
        payload.extend(flat);
    }
    let body = CheckpointBody {
        meta,
        specs: networks.iter().map(|n| n.spec.clone()).collect(),
        lengths,
    };
    container::write(path, CHECKPOINT_KIND, &body, &payload)
}

pub fn load_checkpoint<M: Serialize + DeserializeOwned>(path: &Path) -> Result<(M, Vec<Network>)> {
    let (body, payload): (CheckpointBody<M>, Vec<f64>) = container::read(path, CHECKPOINT_KIND)?;
    if body.specs.len() != body.lengths.len() || body.lengths.iter().sum::<usize>() != payload.len()
    {
        return Err(Error::Format(format!(
            "{}: network table does not match the payload",
            path.display()
        )));
    }
    let mut cursor = 0;
    let mut networks = Vec::with_capacity(body.specs.len());
    for (spec, len) in body.specs.into_iter().zip(body.lengths) {
        let params = Parameters::from_flat(&spec, &payload[cursor..cursor + len])?;
        cursor += len;
        networks.push(Network::from_parts(spec, params)?);
    }
    Ok((body.meta, networks))
}
