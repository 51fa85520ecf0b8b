use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result, Stage};
use crate::nn::{load_weights, save_weights, weights_checksum, Network, NetworkSpec};
use crate::schema::LabelSchema;

const FORMAT: &str = "synthseg-bundle";
const MANIFEST: &str = "bundle.json";
const SCHEMA_FILE: &str = "schema.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageEntry {
    spec: String,
    weights: String,
    checksum: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    schema: String,
    stages: BTreeMap<String, StageEntry>,
}

/// A bundle directory on disk, possibly holding only some of the stages.
#[derive(Debug, Clone)]
pub struct BundleDir {
    root: PathBuf,
    manifest: Manifest,
}

impl BundleDir {
    /// Opens `root`, creating an empty bundle with `schema` if there is no manifest yet.
    pub fn open_or_create(root: impl AsRef<Path>, schema: &LabelSchema) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.join(MANIFEST).exists() {
            return Self::open(root);
        }
        fs::create_dir_all(&root)?;
        fs::write(root.join(SCHEMA_FILE), schema.to_json())?;
        let manifest =
            Manifest { format: FORMAT.into(), version: 1, schema: SCHEMA_FILE.into(), stages: BTreeMap::new() };
        let dir = Self { root, manifest };
        dir.write_manifest()?;
        Ok(dir)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let text = fs::read_to_string(root.join(MANIFEST))
            .map_err(|e| PipelineError::Bundle(format!("{}: {e}", root.join(MANIFEST).display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT || manifest.version != 1 {
            return Err(PipelineError::Bundle(format!("unsupported bundle format {} v{}", manifest.format, manifest.version)));
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(self.root.join(MANIFEST), text + "\n")?;
        Ok(())
    }

    pub fn schema(&self) -> Result<LabelSchema> {
        Ok(LabelSchema::load(self.root.join(&self.manifest.schema))?)
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.manifest.stages.contains_key(stage.name())
    }

    /// Recorded SHA-256 of a stage's weights.
    pub fn checksum(&self, stage: Stage) -> Option<&str> {
        self.manifest.stages.get(stage.name()).map(|e| e.checksum.as_str())
    }

    pub fn save_stage(&mut self, stage: Stage, network: &Network<f32>) -> Result<()> {
        let spec = format!("{}.spec.json", stage.name());
        let weights = format!("{}.weights.json", stage.name());
        fs::write(self.root.join(&spec), serde_json::to_string_pretty(network.spec())? + "\n")?;
        save_weights(network.weights(), self.root.join(&weights))?;
        let checksum = weights_checksum(network.weights());
        self.manifest.stages.insert(stage.name().into(), StageEntry { spec, weights, checksum });
        self.write_manifest()
    }

    pub fn load_stage(&self, stage: Stage) -> Result<Network<f32>> {
        let entry = self.manifest.stages.get(stage.name()).ok_or(PipelineError::MissingStage(stage))?;
        let spec: NetworkSpec = serde_json::from_str(&fs::read_to_string(self.root.join(&entry.spec))?)?;
        let weights = load_weights(self.root.join(&entry.weights))?;
        Ok(Network::from_parts(&spec, weights)?)
    }
}

/// The five trained networks and the label schema they were trained with.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub s1: Network<f32>,
    pub d: Network<f32>,
    pub s2: Network<f32>,
    pub s3: Network<f32>,
    pub r: Network<f32>,
    pub schema: LabelSchema,
}

impl ModelBundle {
    /// Checks every stage's channel counts against the schema.
    pub fn new(
        s1: Network<f32>,
        d: Network<f32>,
        s2: Network<f32>,
        s3: Network<f32>,
        r: Network<f32>,
        schema: LabelSchema,
    ) -> Result<Self> {
        let bundle = Self { s1, d, s2, s3, r, schema };
        for stage in Stage::ALL {
            let spec = bundle.stage(stage).spec();
            let want = (stage.in_channels(), stage.out_channels(&bundle.schema));
            if (spec.in_channels, spec.out_channels) != want {
                return Err(PipelineError::Bundle(format!(
                    "stage {stage} has {}->{} channels, the schema needs {}->{}",
                    spec.in_channels, spec.out_channels, want.0, want.1
                )));
            }
        }
        Ok(bundle)
    }

    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let dir = BundleDir::open(root)?;
        Self::new(
            dir.load_stage(Stage::S1)?,
            dir.load_stage(Stage::D)?,
            dir.load_stage(Stage::S2)?,
            dir.load_stage(Stage::S3)?,
            dir.load_stage(Stage::R)?,
            dir.schema()?,
        )
    }

    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        let mut dir = BundleDir::open_or_create(root, &self.schema)?;
        for stage in Stage::ALL {
            dir.save_stage(stage, self.stage(stage))?;
        }
        Ok(())
    }

    pub fn stage(&self, stage: Stage) -> &Network<f32> {
        match stage {
            Stage::S1 => &self.s1,
            Stage::D => &self.d,
            Stage::S2 => &self.s2,
            Stage::S3 => &self.s3,
            Stage::R => &self.r,
        }
    }

    /// Spatial dims must be multiples of this for every stage.
    pub fn required_multiple(&self) -> usize {
        Stage::ALL.iter().map(|&s| self.stage(s).spec().required_multiple()).max().unwrap_or(1)
    }
}
