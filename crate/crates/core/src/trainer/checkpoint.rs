//! On-disk training state: a JSON header, the network weights and the raw
//! Adam moments. Losses are stored as IEEE bit patterns so a resumed run can
//! be compared bit for bit with an uninterrupted one.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AuditRecord, Result, TrainError, TrainState, ValidationRecord};
use crate::nn::{load_weights, save_weights, AdamState, Network, NetworkSpec};
use crate::pipeline::Stage;

const FORMAT: &str = "synthseg-checkpoint";
const HEADER: &str = "checkpoint.json";
const WEIGHTS: &str = "weights.json";
const MOMENTS: &str = "adam.bin";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    stage: String,
    spec: NetworkSpec,
    step: u64,
    adam_t: u64,
    loss_bits: Vec<u64>,
    validation: Vec<(u64, u64)>,
    audit: Vec<AuditRecord>,
}

/// Writes `state` into `dir`, replacing any previous checkpoint there.
pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_weights(state.network.weights(), dir.join(WEIGHTS))?;
    let mut bytes = Vec::new();
    for moments in [&state.adam.m, &state.adam.v] {
        for t in moments.iter().flatten() {
            t.data().iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
        }
    }
    fs::write(dir.join(MOMENTS), bytes)?;
    let header = Header {
        format: FORMAT.into(),
        stage: state.stage.name().into(),
        spec: state.network.spec().clone(),
        step: state.step,
        adam_t: state.adam.t,
        loss_bits: state.losses.iter().map(|l| l.to_bits()).collect(),
        validation: state.validation.iter().map(|v| (v.step, v.loss.to_bits())).collect(),
        audit: state.audit.clone(),
    };
    fs::write(dir.join(HEADER), serde_json::to_string(&header)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let header: Header = serde_json::from_str(&fs::read_to_string(dir.join(HEADER))?)?;
    if header.format != FORMAT {
        return Err(TrainError::Checkpoint(format!("{} is not a checkpoint", dir.display())));
    }
    let stage =
        Stage::parse(&header.stage).ok_or_else(|| TrainError::Checkpoint(format!("unknown stage {}", header.stage)))?;
    let network = Network::from_parts(&header.spec, load_weights(dir.join(WEIGHTS))?)?;
    let mut adam = AdamState::new(network.weights());
    adam.t = header.adam_t;
    let bytes = fs::read(dir.join(MOMENTS))?;
    let expected = 8 * network.weights().num_params();
    if bytes.len() != expected {
        return Err(TrainError::Checkpoint(format!("moment file has {} bytes, expected {expected}", bytes.len())));
    }
    let mut chunks = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")));
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()).flatten() {
        t.data_mut().iter_mut().for_each(|v| *v = chunks.next().expect("length checked"));
    }
    Ok(TrainState {
        stage,
        network,
        adam,
        step: header.step,
        losses: header.loss_bits.into_iter().map(f64::from_bits).collect(),
        validation: header.validation.into_iter().map(|(step, bits)| ValidationRecord { step, loss: f64::from_bits(bits) }).collect(),
        audit: header.audit,
        wall_seconds: Vec::new(),
    })
}
