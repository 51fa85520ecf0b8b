use rayon::prelude::*;
use serde::Serialize;
use synthseg_core::rng::{RngStream, ALGORITHM};
use synthseg_core::synthgen::{generate_pair, GenParams, GenPriors};
use synthseg_core::volume::nifti::{write_intensity, write_labels};

use crate::error::{CliError, ErrorClass, Result};
use crate::files::{create_dir, load_schema, read_json, read_label_maps, write_json};
use crate::GenerateArgs;

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    seed: u64,
    n: usize,
    rng: &'static str,
    maps: &'a [String],
    priors: &'a GenPriors,
}

#[derive(Serialize)]
struct PairRecord {
    index: usize,
    image: String,
    labels: String,
    map: String,
    params: GenParams,
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    if args.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let schema = load_schema(args.schema.as_deref())?;
    let priors: GenPriors = match &args.priors {
        Some(p) => read_json(p)?,
        None => GenPriors::default(),
    };
    priors.validate().map_err(|e| CliError::new(ErrorClass::Validation, e.to_string()))?;
    let (names, maps) = read_label_maps(&args.maps, &schema)?;
    create_dir(&args.out)?;

    // Pair i draws from its own stream, so the output does not depend on the thread count.
    let pairs: Vec<PairRecord> = (0..args.n)
        .into_par_iter()
        .map(|index| -> Result<PairRecord> {
            let pair = generate_pair(&maps, &priors, &mut RngStream::new(args.seed, index as u64))?;
            let image = format!("pair_{index:04}_image.nii.gz");
            let labels = format!("pair_{index:04}_labels.nii.gz");
            write_intensity(&pair.image, args.out.join(&image))?;
            write_labels(&pair.labels, args.out.join(&labels))?;
            Ok(PairRecord { index, image, labels, map: names[pair.params.map_index].clone(), params: pair.params })
        })
        .collect::<Result<_>>()?;

    let config = ResolvedConfig { seed: args.seed, n: args.n, rng: ALGORITHM, maps: &names, priors: &priors };
    write_json(&args.out.join("config.json"), &config)?;
    write_json(&args.out.join("manifest.json"), &pairs)?;
    println!("wrote {} pairs to {}", args.n, args.out.display());
    Ok(())
}
