/// Joins token texts into a canonical spelling: single spaces between
/// words, none around `::`, inside brackets or before template arguments.
/// Commas are always followed by a space, so a bare `,` never appears in a
/// rendered spelling.
pub fn normalize_spelling(tokens: &[&str]) -> String {
    let mut out = String::new();
    let mut angle_depth = 0i32;
    for (i, &tok) in tokens.iter().enumerate() {
        if i > 0 {
            let prev = tokens[i - 1];
            if needs_space(prev, tok, angle_depth) {
                out.push(' ');
            }
        }
        match tok {
            "<" if i > 0 && is_word(tokens[i - 1]) => angle_depth += 1,
            ">" if angle_depth > 0 => angle_depth -= 1,
            ">>" if angle_depth > 0 => angle_depth = (angle_depth - 2).max(0),
            _ => {}
        }
        out.push_str(tok);
    }
    out
}

fn is_word(tok: &str) -> bool {
    tok.bytes().next().is_some_and(|b| b == b'_' || b.is_ascii_alphanumeric() || b >= 0x80)
}

fn is_ptr_op(tok: &str) -> bool {
    matches!(tok, "*" | "&" | "&&" | "^")
}

fn needs_space(prev: &str, tok: &str, angle_depth: i32) -> bool {
    if prev == "::" || tok == "::" && is_word(prev) || tok == "::" && matches!(prev, ">" | ">>") {
        return false;
    }
    if matches!(tok, "," | ")" | "]") || matches!(prev, "(" | "[") {
        return false;
    }
    if tok == "[" || tok == "(" && prev == ")" {
        return false;
    }
    if prev == "," {
        return true;
    }
    if tok == "<" && is_word(prev) {
        return false;
    }
    if prev == "<" && angle_depth > 0 {
        return false;
    }
    if matches!(tok, ">" | ">>") && angle_depth > 0 {
        return false;
    }
    if is_ptr_op(prev) && is_ptr_op(tok) {
        return false;
    }
    if tok == "..." && (is_ptr_op(prev) || matches!(prev, ">" | ">>") || is_word(prev)) {
        return false;
    }
    if prev == "~" || prev == "operator" && !is_word(tok) {
        return false;
    }
    true
}
