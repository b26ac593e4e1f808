use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use walkdir::WalkDir;

use super::manifest::parse_manifest;
use super::model::{AppModel, Diagnostic, Metadata};
use super::smali::parse_smali_class;
use crate::error::{Error, Result};

pub fn load_metadata(path: &Path) -> Result<Metadata> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads an app from either an unpacked directory
/// (`AndroidManifest.xml`, `smali/**/*.smali`, optional `meta.json`) or a JSON
/// fixture file holding a serialized [`AppModel`].
pub fn load_app(root: &Path) -> Result<AppModel> {
    if root.is_file() {
        let text = fs::read_to_string(root).map_err(|e| Error::io(root, e))?;
        let mut app = AppModel::parse_json(&text)?;
        check_components(&mut app);
        if app.classes.is_empty() {
            return Err(Error::EmptyApp(app.app_id));
        }
        return Ok(app);
    }

    let app_id = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| root.display().to_string());
    let manifest_path = root.join("AndroidManifest.xml");
    let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let components = parse_manifest(&bytes)?;

    let meta_path = root.join("meta.json");
    let metadata = if meta_path.exists() {
        load_metadata(&meta_path)?
    } else {
        Metadata::default()
    };

    let mut files: Vec<_> = WalkDir::new(root.join("smali"))
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "smali"))
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let mut classes = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for file in files {
        let source = file
            .strip_prefix(root)
            .unwrap_or(&file)
            .display()
            .to_string();
        let parsed = fs::read_to_string(&file)
            .map_err(|e| Error::io(&file, e))
            .and_then(|text| parse_smali_class(&text));
        match parsed {
            Ok(class) => {
                if classes.contains_key(&class.name) {
                    diagnostics.push(Diagnostic {
                        source,
                        message: format!("duplicate class {}, keeping the first", class.name),
                    });
                } else {
                    classes.insert(class.name.clone(), class);
                }
            }
            Err(e) => {
                log::warn!("{app_id}: {source}: {e}");
                diagnostics.push(Diagnostic {
                    source,
                    message: e.to_string(),
                });
            }
        }
    }
    if classes.is_empty() {
        return Err(Error::EmptyApp(app_id));
    }
    let mut app = AppModel {
        app_id,
        classes,
        components,
        metadata,
        diagnostics,
    };
    check_components(&mut app);
    Ok(app)
}

fn check_components(app: &mut AppModel) {
    let missing: Vec<String> = app
        .components
        .iter()
        .filter(|c| !app.classes.contains_key(&c.path_name))
        .map(|c| c.path_name.clone())
        .collect();
    for name in missing {
        let message = format!("component class {name} is declared but not defined");
        if !app.diagnostics.iter().any(|d| d.message == message) {
            app.diagnostics.push(Diagnostic {
                source: "AndroidManifest.xml".into(),
                message,
            });
        }
    }
}
