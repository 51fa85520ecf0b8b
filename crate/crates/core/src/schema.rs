//! Label taxonomy: fine structures, coarse tissue classes, cortical parcels and
//! QC regions, with the lookups that translate label maps between them.
//!
//! Label maps may carry either structure ids or parcel ids; a parcel id stands
//! for the cortex structure of its hemisphere (1000-range left, 2000-range
//! right, as in FreeSurfer's aparc+aseg).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Scalar, Tensor};
use crate::volume::LabelVolume;

const DEFAULT_SCHEMA: &str = include_str!("../data/default_schema.json");

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed schema document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate label id {0}")]
    DuplicateId(u32),
    #[error("structure {id}: unknown coarse class {name:?}")]
    UnknownCoarse { id: u32, name: String },
    #[error("structure {id}: unknown QC region {name:?}")]
    UnknownQcRegion { id: u32, name: String },
    #[error("QC region {0} is not assigned to any structure")]
    MissingQcRegion(QcRegion),
    #[error("schema declares {declared} parcels but lists {found}")]
    ParcelCount { declared: usize, found: usize },
    #[error("label 0 must be the background structure with coarse class background")]
    Background,
    #[error("structure {0} is cerebrospinal fluid but does not count towards ICV")]
    CsfOutsideIcv(u32),
    #[error("parcel {0} is outside the 1000/2000 hemisphere ranges")]
    ParcelHemisphere(u32),
    #[error("no cortex structure for the {0:?} hemisphere")]
    MissingCortex(Hemisphere),
    #[error("label {0} is not defined in the schema")]
    UnknownLabel(u32),
    #[error("label {0} is not in the channel list")]
    NotInList(u32),
}

/// Coarse tissue classes, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseClass {
    Background,
    CerebralWhiteMatter,
    CerebralGreyMatter,
    Csf,
    Cerebellum,
}

impl CoarseClass {
    pub const ALL: [CoarseClass; 5] = [
        CoarseClass::Background,
        CoarseClass::CerebralWhiteMatter,
        CoarseClass::CerebralGreyMatter,
        CoarseClass::Csf,
        CoarseClass::Cerebellum,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            CoarseClass::Background => "background",
            CoarseClass::CerebralWhiteMatter => "cerebral_white_matter",
            CoarseClass::CerebralGreyMatter => "cerebral_grey_matter",
            CoarseClass::Csf => "csf",
            CoarseClass::Cerebellum => "cerebellum",
        }
    }
}

/// The ten regions scored by the QC regressor. Hemispheres are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcRegion {
    WhiteMatter,
    Cortex,
    LateralVentricle,
    Cerebellum,
    Thalamus,
    Hippocampus,
    Amygdala,
    Pallidum,
    Putamen,
    Brainstem,
}

impl QcRegion {
    pub const ALL: [QcRegion; 10] = [
        QcRegion::WhiteMatter,
        QcRegion::Cortex,
        QcRegion::LateralVentricle,
        QcRegion::Cerebellum,
        QcRegion::Thalamus,
        QcRegion::Hippocampus,
        QcRegion::Amygdala,
        QcRegion::Pallidum,
        QcRegion::Putamen,
        QcRegion::Brainstem,
    ];
    pub const COUNT: usize = 10;

    /// Position in [`QcRegion::ALL`] (0..10).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            QcRegion::WhiteMatter => "white_matter",
            QcRegion::Cortex => "cortex",
            QcRegion::LateralVentricle => "lateral_ventricle",
            QcRegion::Cerebellum => "cerebellum",
            QcRegion::Thalamus => "thalamus",
            QcRegion::Hippocampus => "hippocampus",
            QcRegion::Amygdala => "amygdala",
            QcRegion::Pallidum => "pallidum",
            QcRegion::Putamen => "putamen",
            QcRegion::Brainstem => "brainstem",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for QcRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Structure {
    pub id: u32,
    pub name: String,
    pub coarse: CoarseClass,
    pub hemisphere: Hemisphere,
    pub is_cortex: bool,
    pub qc_region: Option<QcRegion>,
    pub counts_in_icv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parcel {
    pub id: u32,
    pub name: String,
}

#[derive(Deserialize)]
struct RawStructure {
    id: u32,
    name: String,
    coarse: String,
    hemisphere: Hemisphere,
    #[serde(default)]
    is_cortex: bool,
    #[serde(default)]
    qc_region: Option<String>,
    #[serde(default)]
    counts_in_icv: bool,
}

#[derive(Deserialize)]
struct RawSchema {
    version: u32,
    #[serde(default)]
    parcel_count: Option<usize>,
    structures: Vec<RawStructure>,
    #[serde(default)]
    parcels: Vec<Parcel>,
}

#[derive(Debug, Clone, Copy)]
struct Lookup {
    fine: usize,
    parcel: usize,
}

/// A validated label taxonomy.
#[derive(Debug, Clone)]
pub struct LabelSchema {
    version: u32,
    structures: Vec<Structure>,
    parcels: Vec<Parcel>,
    lookup: HashMap<u32, Lookup>,
}

impl LabelSchema {
    /// The shipped schema: background plus 31 FreeSurfer structures and the 68
    /// Desikan-Killiany cortical parcels.
    pub fn default_schema() -> Self {
        Self::from_json(DEFAULT_SCHEMA).expect("shipped schema is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let raw: RawSchema = serde_json::from_str(text)?;
        let mut structures = Vec::with_capacity(raw.structures.len());
        for s in raw.structures {
            let coarse = CoarseClass::parse(&s.coarse)
                .ok_or_else(|| SchemaError::UnknownCoarse { id: s.id, name: s.coarse.clone() })?;
            let qc_region = match s.qc_region {
                Some(name) => Some(
                    QcRegion::parse(&name).ok_or(SchemaError::UnknownQcRegion { id: s.id, name })?,
                ),
                None => None,
            };
            structures.push(Structure {
                id: s.id,
                name: s.name,
                coarse,
                hemisphere: s.hemisphere,
                is_cortex: s.is_cortex,
                qc_region,
                counts_in_icv: s.counts_in_icv,
            });
        }
        if let Some(declared) = raw.parcel_count {
            if declared != raw.parcels.len() {
                return Err(SchemaError::ParcelCount { declared, found: raw.parcels.len() });
            }
        }
        Self::new(raw.version, structures, raw.parcels)
    }

    pub fn new(version: u32, mut structures: Vec<Structure>, parcels: Vec<Parcel>) -> Result<Self, SchemaError> {
        structures.sort_by_key(|s| s.id);
        let mut seen = BTreeSet::new();
        for id in structures.iter().map(|s| s.id).chain(parcels.iter().map(|p| p.id)) {
            if !seen.insert(id) {
                return Err(SchemaError::DuplicateId(id));
            }
        }
        match structures.first() {
            Some(bg) if bg.id == 0 && bg.coarse == CoarseClass::Background => {}
            _ => return Err(SchemaError::Background),
        }
        let present: BTreeSet<QcRegion> = structures.iter().filter_map(|s| s.qc_region).collect();
        if let Some(&missing) = QcRegion::ALL.iter().find(|r| !present.contains(r)) {
            return Err(SchemaError::MissingQcRegion(missing));
        }
        if let Some(s) = structures.iter().find(|s| s.coarse == CoarseClass::Csf && !s.counts_in_icv) {
            return Err(SchemaError::CsfOutsideIcv(s.id));
        }

        let mut lookup = HashMap::new();
        for (fine, s) in structures.iter().enumerate() {
            lookup.insert(s.id, Lookup { fine, parcel: 0 });
        }
        let cortex_of = |h: Hemisphere| structures.iter().position(|s| s.is_cortex && s.hemisphere == h);
        for (p, parcel) in parcels.iter().enumerate() {
            let hemi = match parcel.id {
                1000..=1999 => Hemisphere::Left,
                2000..=2999 => Hemisphere::Right,
                _ => return Err(SchemaError::ParcelHemisphere(parcel.id)),
            };
            let fine = cortex_of(hemi).ok_or(SchemaError::MissingCortex(hemi))?;
            lookup.insert(parcel.id, Lookup { fine, parcel: p + 1 });
        }
        Ok(Self { version, structures, parcels, lookup })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Structures sorted by id; the position is the fine channel index.
    pub fn structures(&self) -> &[Structure] {
        &self.structures
    }

    pub fn parcels(&self) -> &[Parcel] {
        &self.parcels
    }

    pub fn num_fine(&self) -> usize {
        self.structures.len()
    }

    /// Parcel channels plus the leading non-cortex channel.
    pub fn num_parcel_channels(&self) -> usize {
        self.parcels.len() + 1
    }

    pub fn fine_ids(&self) -> Vec<u32> {
        self.structures.iter().map(|s| s.id).collect()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.lookup.contains_key(&id)
    }

    /// Fine channel of a structure or parcel id.
    pub fn fine_index(&self, id: u32) -> Result<usize, SchemaError> {
        self.lookup.get(&id).map(|l| l.fine).ok_or(SchemaError::UnknownLabel(id))
    }

    /// Parcel channel (1..=68) of a parcel id; 0 for every structure id.
    pub fn parcel_index(&self, id: u32) -> Result<usize, SchemaError> {
        self.lookup.get(&id).map(|l| l.parcel).ok_or(SchemaError::UnknownLabel(id))
    }

    pub fn structure(&self, id: u32) -> Result<&Structure, SchemaError> {
        Ok(&self.structures[self.fine_index(id)?])
    }

    pub fn coarse_of(&self, id: u32) -> Result<CoarseClass, SchemaError> {
        Ok(self.structure(id)?.coarse)
    }

    /// QC channel: 0 for structures outside the ten regions, else region index + 1.
    pub fn qc_channel(&self, id: u32) -> Result<usize, SchemaError> {
        Ok(self.structure(id)?.qc_region.map_or(0, |r| r.index() + 1))
    }

    fn map_labels(&self, labels: &LabelVolume, f: impl Fn(&Lookup) -> u32) -> Result<LabelVolume, SchemaError> {
        let mut out = Vec::with_capacity(labels.data().len());
        for &id in labels.data() {
            out.push(f(self.lookup.get(&id).ok_or(SchemaError::UnknownLabel(id))?));
        }
        Ok(labels.with_data(out).expect("same grid"))
    }

    /// Replaces every voxel's label by its coarse class index (0..5).
    pub fn to_coarse(&self, labels: &LabelVolume) -> Result<LabelVolume, SchemaError> {
        self.map_labels(labels, |l| self.structures[l.fine].coarse.index() as u32)
    }

    /// Replaces parcel ids by their cortex structure id.
    pub fn to_structures(&self, labels: &LabelVolume) -> Result<LabelVolume, SchemaError> {
        self.map_labels(labels, |l| self.structures[l.fine].id)
    }

    /// Per-voxel channel indices for the fine, parcel and QC encodings.
    pub fn fine_channels(&self, labels: &LabelVolume) -> Result<Vec<usize>, SchemaError> {
        labels.data().iter().map(|&id| self.fine_index(id)).collect()
    }

    pub fn parcel_channels(&self, labels: &LabelVolume) -> Result<Vec<usize>, SchemaError> {
        labels.data().iter().map(|&id| self.parcel_index(id)).collect()
    }

    pub fn qc_channels(&self, labels: &LabelVolume) -> Result<Vec<usize>, SchemaError> {
        labels.data().iter().map(|&id| self.qc_channel(id)).collect()
    }

    pub fn coarse_channels(&self, labels: &LabelVolume) -> Result<Vec<usize>, SchemaError> {
        labels.data().iter().map(|&id| self.coarse_of(id).map(CoarseClass::index)).collect()
    }

    /// Ids of structures that count towards intracranial volume, in schema order.
    pub fn icv_structures(&self) -> impl Iterator<Item = &Structure> {
        self.structures.iter().filter(|s| s.counts_in_icv)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            parcel_count: usize,
            structures: &'a [Structure],
            parcels: &'a [Parcel],
        }
        serde_json::to_string_pretty(&Doc {
            version: self.version,
            parcel_count: self.parcels.len(),
            structures: &self.structures,
            parcels: &self.parcels,
        })
        .expect("schema serializes")
    }
}

/// One-hot encoding `[K, X, Y, Z]` of a label map over an explicit label list.
pub fn one_hot<T: Scalar>(labels: &LabelVolume, label_list: &[u32]) -> Result<Tensor<T>, SchemaError> {
    let index: HashMap<u32, usize> = label_list.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let channels = labels
        .data()
        .iter()
        .map(|l| index.get(l).copied().ok_or(SchemaError::NotInList(*l)))
        .collect::<Result<Vec<_>, _>>()?;
    let [x, y, z] = labels.dims();
    Ok(one_hot_indices(&channels, label_list.len(), [x, y, z]))
}

/// One-hot encoding of per-voxel channel indices.
pub fn one_hot_indices<T: Scalar>(channels: &[usize], k: usize, spatial: [usize; 3]) -> Tensor<T> {
    let p = channels.len();
    let mut t = Tensor::zeros(&[k, spatial[0], spatial[1], spatial[2]]);
    let data = t.data_mut();
    for (v, &c) in channels.iter().enumerate() {
        data[c * p + v] = T::one();
    }
    t
}
