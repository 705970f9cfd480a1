//! Final answer assembly: the two serialized paths and the query utterance
//! joined by a separator token.

pub const SEPARATOR: &str = "[SEP]";

/// Join the video path, context path, and utterance with the separator:
/// `"<video path> [SEP] <context path> [SEP] <utterance>"`. Empty parts
/// keep their slot, so the separators always delimit three fields.
pub fn assemble_answer(path_v: &str, path_u: &str, utterance: &str) -> String {
    format!("{path_v} {SEPARATOR} {path_u} {SEPARATOR} {utterance}")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split an assembled answer back into (video path, context path,
/// utterance). Returns `None` unless exactly two separators are present.
pub fn split_answer(answer: &str) -> Option<(String, String, String)> {
    let parts: Vec<&str> = answer.split(SEPARATOR).collect();
    if parts.len() != 3 {
        return None;
    }
    Some((
        parts[0].trim().to_string(),
        parts[1].trim().to_string(),
        parts[2].trim().to_string(),
    ))
}
