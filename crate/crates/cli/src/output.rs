use std::fmt::Display;

/// Prints a machine-readable block:
///
/// ```text
/// --- name
/// key = value
/// ---
/// ```
pub fn block<K: Display, V: Display>(name: &str, entries: impl IntoIterator<Item = (K, V)>) {
    println!("{}", render(name, entries));
}

pub fn render<K: Display, V: Display>(name: &str, entries: impl IntoIterator<Item = (K, V)>) -> String {
    let mut s = format!("--- {name}\n");
    for (k, v) in entries {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s.push_str("---");
    s
}

pub fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}
