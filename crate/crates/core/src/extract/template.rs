use std::fs;
use std::path::Path;

use super::ExtractError;

/// Marker replaced by the description when a template is rendered.
pub const PLACEHOLDER: &str = "{description}";

/// Instruction text sent to the extraction model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    body: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, ExtractError> {
        let (id, body) = (id.into(), body.into());
        let count = body.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(ExtractError::Template {
                id,
                reason: format!("expected exactly one {PLACEHOLDER} placeholder, found {count}"),
            });
        }
        Ok(PromptTemplate { id, body })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn render(&self, description: &str) -> String {
        self.body.replacen(PLACEHOLDER, description, 1)
    }
}

const DEFAULTS: [(&str, &str); 5] = [
    ("t1_direct", include_str!("../../templates/extraction/t1_direct.txt")),
    (
        "t2_annotator",
        include_str!("../../templates/extraction/t2_annotator.txt"),
    ),
    (
        "t3_stepwise",
        include_str!("../../templates/extraction/t3_stepwise.txt"),
    ),
    (
        "t4_checklist",
        include_str!("../../templates/extraction/t4_checklist.txt"),
    ),
    ("t5_minimal", include_str!("../../templates/extraction/t5_minimal.txt")),
];

/// The five templates bundled with the crate.
pub fn default_templates() -> Vec<PromptTemplate> {
    DEFAULTS
        .iter()
        .map(|(id, body)| PromptTemplate::new(*id, *body).expect("bundled template is valid"))
        .collect()
}

/// Load every `*.txt` file in `dir` as a template, ordered by file name.
/// The file stem becomes the template id.
pub fn load_templates(dir: &Path) -> Result<Vec<PromptTemplate>, ExtractError> {
    let io_err = |e: std::io::Error| ExtractError::Template {
        id: dir.display().to_string(),
        reason: e.to_string(),
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let body = fs::read_to_string(&p).map_err(io_err)?;
            PromptTemplate::new(id, body)
        })
        .collect()
}
