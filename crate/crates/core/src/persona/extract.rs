use super::ValidationError;

/// Locate the first balanced top-level JSON object in `text`, skipping any
/// surrounding prose or code fences. Returns the byte range of the object.
pub fn extract_json_object(text: &str) -> Result<(usize, &str), ValidationError> {
    let start = text.find('{').ok_or_else(|| ValidationError::Parse {
        offset: 0,
        message: "no JSON object found".into(),
    })?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((start, &text[start..=i]));
                }
            }
            _ => {}
        }
    }
    Err(ValidationError::Parse {
        offset: text.len(),
        message: "unterminated JSON object".into(),
    })
}
