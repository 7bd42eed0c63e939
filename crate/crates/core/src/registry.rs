//! Name-keyed constructor tables for interchangeable strategies.

use std::collections::BTreeMap;

use crate::error::{parameter, Result};

/// Constructors for one strategy family, looked up by the name used in
/// configuration files.
pub struct Registry<T: ?Sized, Ctx: ?Sized> {
    family: &'static str,
    entries: BTreeMap<&'static str, fn(&Ctx) -> Result<Box<T>>>,
}

impl<T: ?Sized, Ctx: ?Sized> Registry<T, Ctx> {
    pub fn new(family: &'static str) -> Self {
        Self { family, entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, build: fn(&Ctx) -> Result<Box<T>>) -> &mut Self {
        self.entries.insert(name, build);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, name: &str, ctx: &Ctx) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(build) => build(ctx),
            None => Err(parameter(format!(
                "unknown {} '{name}' (known: {})",
                self.family,
                self.names().collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}
