//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic "DAGF" | version u32 | m u32 | k u32 | channels u32 | variant u32
//!   then records until EOF:
//!   name_len u32 | name utf-8 | dtype u8 (0 = f32, 1 = f64) | rank u8 |
//!   dims rank x u32 | payload numel x dtype-width bytes
//!
//! Save followed by load of the same dtype is bit-exact.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::network::{init_params, AblationVariant, DagfConfig};
use crate::optim::OptimizerState;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{Dims, TensorData};

const MAGIC: &[u8; 4] = b"DAGF";
const VERSION: u32 = 1;
const OPTIM_MAGIC: &[u8; 4] = b"DAGO";

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_record<S: Scalar, W: Write>(w: &mut W, name: &str, tensor: &TensorData<S>) -> Result<()> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[S::DTYPE_TAG, 4u8])?;
    let d = tensor.dims;
    for dim in [d.n, d.c, d.h, d.w] {
        write_u32(w, dim as u32)?;
    }
    let mut buf = Vec::with_capacity(tensor.data.len() * S::BYTE_WIDTH);
    for v in &tensor.data {
        v.write_le(&mut buf);
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads one record; `Ok(None)` at a clean EOF boundary.
fn read_record<S: Scalar, R: Read>(r: &mut R) -> Result<Option<(String, TensorData<S>)>> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let name_len = u32::from_le_bytes(len_buf) as usize;
    if name_len > 4096 {
        return Err(CoreError::CorruptCheckpoint(format!("implausible name length {name_len}")));
    }
    let mut name_buf = vec![0u8; name_len];
    r.read_exact(&mut name_buf)
        .map_err(|_| CoreError::CorruptCheckpoint("truncated record name".into()))?;
    let name = String::from_utf8(name_buf)
        .map_err(|_| CoreError::CorruptCheckpoint("record name is not utf-8".into()))?;
    let mut head = [0u8; 2];
    r.read_exact(&mut head)
        .map_err(|_| CoreError::CorruptCheckpoint(format!("truncated header for `{name}`")))?;
    let (dtype, rank) = (head[0], head[1] as usize);
    if dtype > 1 {
        return Err(CoreError::CorruptCheckpoint(format!("unknown dtype tag {dtype} for `{name}`")));
    }
    if rank != 4 {
        return Err(CoreError::CorruptCheckpoint(format!("unsupported rank {rank} for `{name}`")));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = read_u32(r).map_err(|_| CoreError::CorruptCheckpoint(format!("truncated dims for `{name}`")))? as usize;
    }
    let dims = Dims::new(dims[0], dims[1], dims[2], dims[3]);
    let width = if dtype == 0 { 4 } else { 8 };
    let mut payload = vec![0u8; dims.numel() * width];
    r.read_exact(&mut payload)
        .map_err(|_| CoreError::CorruptCheckpoint(format!("truncated payload for `{name}`")))?;
    let data: Vec<S> = if dtype == 0 {
        payload.chunks_exact(4).map(|c| S::from_f64(f32::read_le(c) as f64)).collect()
    } else {
        payload.chunks_exact(8).map(|c| S::from_f64(f64::read_le(c))).collect()
    };
    Ok(Some((name, TensorData::from_vec(dims, data)?)))
}

pub fn save_checkpoint<S: Scalar>(store: &ParamStore<S>, cfg: &DagfConfig, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, cfg.m as u32)?;
    write_u32(&mut w, cfg.k as u32)?;
    write_u32(&mut w, cfg.channels as u32)?;
    write_u32(&mut w, cfg.variant.id())?;
    for (name, p) in store.iter() {
        write_record(&mut w, name, &p.value)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint: validates magic/version, reconstructs the parameter
/// registry for the stored config, and fills it from the records. Every
/// registered parameter must be present with matching dims, and no stray
/// records are allowed; both problems report as config mismatches.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(ParamStore<S>, DagfConfig)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::CheckpointVersion { found: version, expected: VERSION });
    }
    let m = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let channels = read_u32(&mut r)? as usize;
    let variant_id = read_u32(&mut r)?;
    let variant = AblationVariant::from_id(variant_id)
        .ok_or_else(|| CoreError::CorruptCheckpoint(format!("unknown variant id {variant_id}")))?;
    let cfg = DagfConfig { m, k, channels, variant, ..DagfConfig::default() };
    cfg.validate()
        .map_err(|e| CoreError::CorruptCheckpoint(format!("invalid stored config: {e}")))?;

    // Registry defines names, shapes, and trainability; records fill values.
    let mut store = init_params::<S>(&cfg, 0)?;
    let mut seen = 0usize;
    while let Some((name, tensor)) = read_record::<S, _>(&mut r)? {
        let param = store.get_mut(&name).map_err(|_| {
            CoreError::ConfigMismatch(format!("record `{name}` is not a parameter of the stored config"))
        })?;
        if param.value.dims != tensor.dims {
            return Err(CoreError::ConfigMismatch(format!(
                "parameter `{name}` has dims {} in the checkpoint, expected {}",
                tensor.dims, param.value.dims
            )));
        }
        param.value = tensor;
        seen += 1;
    }
    if seen != store.len() {
        return Err(CoreError::ConfigMismatch(format!(
            "checkpoint holds {seen} records, config needs {}",
            store.len()
        )));
    }
    Ok((store, cfg))
}

/// Optimizer sidecar (for training resume): magic "DAGO", version, step
/// count, hyper-parameters, then first/second moment records with "m."/"v."
/// name prefixes.
pub fn save_optimizer_state<S: Scalar>(state: &OptimizerState<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(OPTIM_MAGIC)?;
    write_u32(&mut w, VERSION)?;
    w.write_all(&state.step_count.to_le_bytes())?;
    for v in [state.learning_rate, state.beta1, state.beta2, state.epsilon] {
        w.write_all(&v.to_le_bytes())?;
    }
    for (kind, moments) in [("m", &state.first_moment), ("v", &state.second_moment)] {
        for (name, buf) in moments {
            let t = TensorData::from_vec(Dims::new(1, 1, 1, buf.len()), buf.clone())?;
            write_record(&mut w, &format!("{kind}.{name}"), &t)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_optimizer_state<S: Scalar>(path: &Path) -> Result<OptimizerState<S>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != OPTIM_MAGIC {
        return Err(CoreError::CorruptCheckpoint("bad optimizer-state magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::CheckpointVersion { found: version, expected: VERSION });
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let step_count = u64::from_le_bytes(u64buf);
    let mut hyper = [0f64; 4];
    for h in hyper.iter_mut() {
        r.read_exact(&mut u64buf)?;
        *h = f64::from_le_bytes(u64buf);
    }
    let mut state = OptimizerState::new(hyper[0]);
    state.beta1 = hyper[1];
    state.beta2 = hyper[2];
    state.epsilon = hyper[3];
    state.step_count = step_count;
    while let Some((name, tensor)) = read_record::<S, _>(&mut r)? {
        let (kind, param) = name
            .split_once('.')
            .ok_or_else(|| CoreError::CorruptCheckpoint(format!("bad moment record `{name}`")))?;
        match kind {
            "m" => state.first_moment.insert(param.to_string(), tensor.data),
            "v" => state.second_moment.insert(param.to_string(), tensor.data),
            _ => return Err(CoreError::CorruptCheckpoint(format!("bad moment record `{name}`"))),
        };
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::network::forward;
    use crate::rng::{streams, SeedRng};

    fn toy_cfg() -> DagfConfig {
        DagfConfig { m: 2, k: 3, channels: 4, ..DagfConfig::default() }
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("dagf-core-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact_and_forward_identical() {
        let cfg = toy_cfg();
        let store = init_params::<f32>(&cfg, 8).unwrap();
        let path = tmp("roundtrip.ckpt");
        save_checkpoint(&store, &cfg, &path).unwrap();
        let (loaded, cfg2) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(cfg2.m, cfg.m);
        assert_eq!(cfg2.variant, cfg.variant);
        for (name, p) in store.iter() {
            let q = loaded.get(name).unwrap();
            assert_eq!(p.value.data, q.value.data, "{name}");
            assert_eq!(p.trainable, q.trainable, "{name}");
        }

        // Bit-identical forwards from original and reloaded parameters.
        let mut rng = SeedRng::new(9, streams::TEST);
        let t = TensorData::<f32>::random_uniform(Dims::new(1, 1, 8, 8), 0.0, 1.0, &mut rng);
        let gu = TensorData::<f32>::random_uniform(Dims::new(1, 3, 8, 8), 0.0, 1.0, &mut rng);
        let run = |st: &ParamStore<f32>| {
            let mut g = Graph::new();
            let bound = st.bind(&mut g);
            let tv = g.constant(t.clone());
            let gv = g.constant(gu.clone());
            let pass = forward(&mut g, &bound, &cfg, tv, gv).unwrap();
            g.value(pass.final_output()).clone()
        };
        assert_eq!(run(&store).data, run(&loaded).data);
    }

    #[test]
    fn corrupt_version_and_config_errors_are_distinct() {
        let cfg = toy_cfg();
        let store = init_params::<f32>(&cfg, 8).unwrap();
        let path = tmp("distinct.ckpt");
        save_checkpoint(&store, &cfg, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        // Corrupt: truncated payload.
        let cut = tmp("truncated.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&cut),
            Err(CoreError::CorruptCheckpoint(_) | CoreError::ConfigMismatch(_))
        ));

        // Version mismatch.
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 99;
        let vp = tmp("version.ckpt");
        std::fs::write(&vp, &wrong_version).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&vp),
            Err(CoreError::CheckpointVersion { found: 99, expected: 1 })
        ));

        // Config mismatch: metadata claims m=1, records are for m=2.
        let mut wrong_cfg = bytes.clone();
        wrong_cfg[8] = 1;
        let cp = tmp("config.ckpt");
        std::fs::write(&cp, &wrong_cfg).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&cp), Err(CoreError::ConfigMismatch(_))));

        // Bad magic.
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        let mp = tmp("magic.ckpt");
        std::fs::write(&mp, &bad_magic).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&mp), Err(CoreError::CorruptCheckpoint(_))));
    }

    #[test]
    fn optimizer_state_round_trip() {
        let mut state = OptimizerState::<f32>::new(1e-3);
        state.step_count = 17;
        state.first_moment.insert("w".into(), vec![0.5, -0.25]);
        state.second_moment.insert("w".into(), vec![0.1, 0.2]);
        let path = tmp("optim.ckpt");
        save_optimizer_state(&state, &path).unwrap();
        let loaded = load_optimizer_state::<f32>(&path).unwrap();
        assert_eq!(loaded.step_count, 17);
        assert_eq!(loaded.learning_rate, 1e-3);
        assert_eq!(loaded.first_moment["w"], vec![0.5, -0.25]);
        assert_eq!(loaded.second_moment["w"], vec![0.1, 0.2]);
    }
}
