use crate::model::{CueSet, Dimension};

use super::{CueExtractor, ExtractError, ExtractionResult, PromptTemplate};

const MARKERS: [(&str, Dimension); 3] = [
    ("[visual]", Dimension::Visual),
    ("[audio]", Dimension::Audio),
    ("[global]", Dimension::Global),
];

/// Parse text written in the labeled-section convention
/// `[VISUAL] a; b [AUDIO] c [GLOBAL] d`.
///
/// Markers are case-insensitive and may appear in any order; a repeated marker
/// extends its section. A section ends at the next marker or at a blank line;
/// text before the first marker or after a section's blank line is commentary
/// and ignored.
pub fn extract_structured(annotated_text: &str) -> Result<CueSet, ExtractError> {
    let lower = annotated_text.to_ascii_lowercase();
    let mut hits: Vec<(usize, usize, Dimension)> = Vec::new();
    for (marker, dim) in MARKERS {
        hits.extend(lower.match_indices(marker).map(|(at, m)| (at, at + m.len(), dim)));
    }
    if hits.is_empty() {
        return Err(ExtractError::MissingMarkers);
    }
    hits.sort_by_key(|h| h.0);

    let mut sections: [Vec<&str>; 3] = Default::default();
    for (i, &(_, body_start, dim)) in hits.iter().enumerate() {
        let body_end = hits.get(i + 1).map_or(annotated_text.len(), |h| h.0);
        let slot = &mut sections[dim as usize];
        slot.extend(
            section_body(&annotated_text[body_start..body_end])
                .split(';')
                .map(str::trim)
                .filter(|c| !c.is_empty()),
        );
    }
    let [visual, audio, global] = sections;
    Ok(CueSet::new(visual, audio, global)?)
}

/// Cut `body` at its first blank line, ignoring the rest of the marker's own line.
fn section_body(body: &str) -> &str {
    let first_break = body.find('\n').map_or(body.len(), |i| i + 1);
    let mut at = first_break;
    for line in body[first_break..].split_inclusive('\n') {
        if line.trim().is_empty() {
            return &body[..at];
        }
        at += line.len();
    }
    body
}

/// Template-independent extractor over pre-annotated text.
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuredExtractor;

impl CueExtractor for StructuredExtractor {
    fn extract(&self, description: &str, template: &PromptTemplate) -> Result<ExtractionResult, ExtractError> {
        Ok(ExtractionResult {
            cues: extract_structured(description)?,
            template_id: template.id().to_string(),
            raw_model_output: description.to_string(),
            cached: false,
        })
    }
}
