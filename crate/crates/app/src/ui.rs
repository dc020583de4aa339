//! Review UI assets, compiled into the binary.

const ASSETS: &[(&str, &str, &str)] = &[
    ("index.html", "text/html; charset=utf-8", include_str!("../ui/index.html")),
    ("app.js", "text/javascript; charset=utf-8", include_str!("../ui/app.js")),
    ("validate.js", "text/javascript; charset=utf-8", include_str!("../ui/validate.js")),
    ("style.css", "text/css; charset=utf-8", include_str!("../ui/style.css")),
];

pub fn asset(name: &str) -> Option<(&'static str, &'static str)> {
    ASSETS.iter().find(|(n, _, _)| *n == name).map(|(_, mime, body)| (*mime, *body))
}
