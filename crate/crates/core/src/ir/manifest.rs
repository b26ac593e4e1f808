//! Decoded (plain-text) `AndroidManifest.xml` parsing.

use super::model::{java_to_descriptor, Component, ComponentKind, IntentFilter};
use crate::error::{Error, Result};

const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

/// Leading bytes of a binary XML chunk header: type RES_XML_TYPE (0x0003),
/// header size 8, little-endian.
pub const AXML_MAGIC: [u8; 4] = [0x03, 0x00, 0x08, 0x00];

fn android_attr<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    node.attribute((ANDROID_NS, name))
        .or_else(|| node.attribute(name))
}

/// Expands `.Main` / `Main` relative to the manifest package.
fn qualify(package: &str, name: &str) -> String {
    if let Some(rest) = name.strip_prefix('.') {
        format!("{package}.{rest}")
    } else if !name.contains('.') && !package.is_empty() {
        format!("{package}.{name}")
    } else {
        name.to_string()
    }
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<Component>> {
    if bytes.starts_with(&AXML_MAGIC) {
        return Err(Error::AxmlUnsupported);
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Xml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "manifest" {
        return Err(Error::Xml(format!(
            "root element is <{}>, expected <manifest>",
            root.tag_name().name()
        )));
    }
    let package = root.attribute("package").unwrap_or_default();

    let mut components = Vec::new();
    for app in root.children().filter(|n| n.has_tag_name("application")) {
        for node in app.children().filter(|n| n.is_element()) {
            let Ok(category) = node.tag_name().name().parse::<ComponentKind>() else {
                continue;
            };
            let name = android_attr(node, "name").ok_or_else(|| {
                Error::Xml(format!(
                    "<{}> at byte {} has no android:name",
                    category.as_str(),
                    node.range().start
                ))
            })?;
            let intent_filters: Vec<IntentFilter> = node
                .children()
                .filter(|n| n.has_tag_name("intent-filter"))
                .map(|f| {
                    let values = |tag: &str| {
                        f.children()
                            .filter(|n| n.has_tag_name(tag))
                            .filter_map(|n| android_attr(n, "name").map(str::to_string))
                            .collect::<Vec<_>>()
                    };
                    IntentFilter {
                        actions: values("action"),
                        categories: values("category"),
                    }
                })
                .collect();
            let exported = match android_attr(node, "exported") {
                Some(v) => v == "true",
                None => !intent_filters.is_empty(),
            };
            components.push(Component {
                path_name: java_to_descriptor(&qualify(package, name)),
                category,
                intent_filters,
                exported,
            });
        }
    }
    Ok(components)
}
