//! Directory ingestion: `root/<domain>/<class>/<image file>`.
//!
//! Domains and classes are enumerated in sorted name order, and class ids are
//! assigned from the sorted union of class names across domains, so the
//! mapping is stable no matter how the filesystem lists entries.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use std::collections::BTreeSet;
use std::path::Path;

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Load every domain under `root`, decoding images and resizing them to
/// `size`×`size` with `channels` channels.
pub fn load_directory(root: &Path, channels: usize, size: usize) -> Result<Vec<Dataset>> {
    let domains = sorted_subdirs(root)?;
    if domains.is_empty() {
        return Err(Error::Data(format!("no domain directories under {}", root.display())));
    }
    // global class ids from the sorted union of class names
    let mut class_names = BTreeSet::new();
    for (_, dpath) in &domains {
        for (cname, _) in sorted_subdirs(dpath)? {
            class_names.insert(cname);
        }
    }
    let class_names: Vec<String> = class_names.into_iter().collect();
    let class_id = |name: &str| class_names.iter().position(|c| c == name);

    let mut out = Vec::with_capacity(domains.len());
    for (dname, dpath) in &domains {
        let classes = sorted_subdirs(dpath)?;
        if classes.len() < 2 {
            return Err(Error::Data(format!(
                "domain {} has {} class directories, need at least 2",
                dpath.display(),
                classes.len()
            )));
        }
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (cname, cpath) in &classes {
            let files = sorted_files(cpath)?;
            if files.is_empty() {
                return Err(Error::Data(format!("class directory {} is empty", cpath.display())));
            }
            let id = class_id(cname).expect("class name came from the union");
            for f in files {
                let img = Image::load(&f, channels)?;
                images.push(img.resize_bilinear(size, size));
                labels.push(id);
            }
        }
        out.push(Dataset {
            domain: dname.clone(),
            num_classes: class_names.len(),
            images,
            labels,
        });
    }
    Ok(out)
}
