//! Set-to-set comparison of face templates.
//!
//! A template compares using only its well-aligned members when it has any,
//! otherwise all of its members. Two templates score the mean cosine over the
//! Cartesian product of their selected members.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{Dataset, EmbeddingRecord};
use crate::error::{invalid, Error, Result};
use crate::filter::{cosine_similarity, Candidate, CandidateList, TopK};

#[derive(Debug, Clone, PartialEq)]
pub struct FaceTemplate {
    pub template_id: u64,
    pub subject: Option<String>,
    items: Vec<EmbeddingRecord>,
}

impl FaceTemplate {
    pub fn new(
        template_id: u64,
        subject: Option<String>,
        items: Vec<EmbeddingRecord>,
    ) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(invalid(format!("template {template_id} has no members")));
        };
        let dim = first.vector.len();
        if let Some(bad) = items.iter().find(|r| r.vector.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.vector.len(),
            });
        }
        Ok(Self {
            template_id,
            subject,
            items,
        })
    }

    pub fn items(&self) -> &[EmbeddingRecord] {
        &self.items
    }

    pub fn dim(&self) -> usize {
        self.items[0].vector.len()
    }

    /// True when at least one member is well aligned.
    pub fn is_well_aligned(&self) -> bool {
        self.items.iter().any(|r| r.well_aligned)
    }
}

/// Well-aligned members if any exist, otherwise every member.
pub fn select_comparison_subset(template: &FaceTemplate) -> Vec<&EmbeddingRecord> {
    if template.is_well_aligned() {
        template.items.iter().filter(|r| r.well_aligned).collect()
    } else {
        template.items.iter().collect()
    }
}

pub fn template_similarity(a: &FaceTemplate, b: &FaceTemplate) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let sa = select_comparison_subset(a);
    let sb = select_comparison_subset(b);
    let mut total = 0.0;
    for x in &sa {
        for y in &sb {
            total += cosine_similarity(&x.vector, &y.vector);
        }
    }
    Ok(total / (sa.len() * sb.len()) as f64)
}

/// Exhaustive template ranking: descending similarity, ties by ascending id.
pub fn template_search(
    gallery: &[FaceTemplate],
    probe: &FaceTemplate,
    k: usize,
) -> Result<CandidateList> {
    if gallery.is_empty() {
        return Err(Error::InsufficientData("empty template gallery".into()));
    }
    if k < 1 {
        return Err(invalid("k must be at least 1"));
    }
    let mut top = TopK::new(k);
    for t in gallery {
        top.push(t.template_id, template_similarity(t, probe)?);
    }
    let entries: Vec<Candidate> = top.into_sorted();
    Ok(CandidateList::from_unsorted(entries))
}

/// One entry of a template manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub template_id: u64,
    pub subject: Option<String>,
    /// Record ids in the accompanying vector file.
    pub members: Vec<u64>,
}

pub fn decode_template_manifest(bytes: &[u8]) -> Result<Vec<TemplateSpec>> {
    serde_json::from_slice(bytes).map_err(|e| Error::Manifest(e.to_string()))
}

pub fn encode_template_manifest(specs: &[TemplateSpec]) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(specs)?)
}

/// Resolve manifest entries against the vectors they reference.
pub fn assemble_templates(specs: &[TemplateSpec], vectors: &Dataset) -> Result<Vec<FaceTemplate>> {
    let rows: HashMap<u64, usize> = vectors
        .ids()
        .iter()
        .enumerate()
        .map(|(r, &id)| (id, r))
        .collect();
    let mut seen = std::collections::HashSet::new();
    specs
        .iter()
        .map(|spec| {
            if !seen.insert(spec.template_id) {
                return Err(invalid(format!(
                    "duplicate template id {}",
                    spec.template_id
                )));
            }
            let items = spec
                .members
                .iter()
                .map(|id| {
                    rows.get(id)
                        .map(|&r| vectors.record(r).to_owned())
                        .ok_or(Error::UnknownId(*id))
                })
                .collect::<Result<Vec<_>>>()?;
            FaceTemplate::new(spec.template_id, spec.subject.clone(), items)
        })
        .collect()
}

pub fn load_templates(manifest: &Path, vectors: &Dataset) -> Result<Vec<FaceTemplate>> {
    assemble_templates(&decode_template_manifest(&fs::read(manifest)?)?, vectors)
}
