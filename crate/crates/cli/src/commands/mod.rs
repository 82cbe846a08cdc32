//! One module per subcommand; each takes its parsed args plus the resolved
//! run configuration and writes its outputs under --out.

pub mod cascades;
pub mod effects;
pub mod filter;
pub mod fit;
pub mod ingest;
pub mod placebo;
pub mod simulate;
pub mod validate;

use std::path::Path;

use anyhow::{Context, Result};

use notefx::report::{check_schema, CohortArchive};

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
}

pub(crate) fn load_archive(path: &Path) -> Result<CohortArchive> {
    let archive: CohortArchive = crate::io::read_json(path)?;
    check_schema(archive.schema_version)?;
    Ok(archive)
}
