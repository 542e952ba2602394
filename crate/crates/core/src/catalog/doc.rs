use super::Track;

/// Renders the text document used by the sparse baseline:
/// `"{Title} by {Artist} from {Album} {tags...} {Year}"`.
///
/// Absent album, tags or year are omitted and all whitespace runs collapse to
/// a single space, so the result never contains tabs or newlines.
pub fn render_text_doc(track: &Track) -> String {
    let mut parts: Vec<String> = vec![track.title.clone(), "by".into(), track.artist.clone()];
    if !track.album.trim().is_empty() {
        parts.push("from".into());
        parts.push(track.album.clone());
    }
    parts.extend(track.tags.iter().cloned());
    if let Some(year) = track.year {
        parts.push(year.to_string());
    }
    parts
        .iter()
        .flat_map(|p| p.split_whitespace())
        .collect::<Vec<_>>()
        .join(" ")
}
