//! Name-keyed registries of interchangeable strategies.
//!
//! Every pluggable family in the crate (basis systems, roughness operators,
//! quadrature rules, covariance forms, smoothing-parameter selectors, FPC
//! count rules) is a trait object built from a short spec string of the form
//! `name[:arg[:arg...]]`, e.g. `bspline:4:26` or `harmonic:0.0172`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{FlmmError, Result};

type Factory<T, C> = Box<dyn Fn(&[&str], &C) -> Result<Box<T>> + Send + Sync>;

struct Entry<T: ?Sized, C: ?Sized> {
    usage: &'static str,
    build: Factory<T, C>,
}

/// Maps strategy names to factories producing boxed trait objects.
///
/// `C` is construction context shared by all entries of a family (for
/// example the domain a basis lives on).
pub struct Registry<T: ?Sized, C = ()> {
    family: &'static str,
    entries: BTreeMap<&'static str, Entry<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    pub fn family(&self) -> &'static str {
        self.family
    }

    /// Registers a factory under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &'static str, usage: &'static str, build: F) -> &mut Self
    where
        F: Fn(&[&str], &C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.insert(
            name,
            Entry {
                usage,
                build: Box::new(build),
            },
        );
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn usage(&self, name: &str) -> Option<&'static str> {
        self.entries.get(name).map(|e| e.usage)
    }

    /// Builds the strategy described by `spec` (`name:arg:...`).
    pub fn build(&self, spec: &str, ctx: &C) -> Result<Box<T>> {
        let mut parts = spec.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| FlmmError::UnknownStrategy {
                family: self.family,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            })?;
        (entry.build)(&args, ctx).map_err(|e| match e {
            FlmmError::InvalidArgument(msg) => {
                FlmmError::InvalidArgument(format!("{spec}: {msg} (usage: {})", entry.usage))
            }
            other => other,
        })
    }
}

impl<T: ?Sized, C> fmt::Debug for Registry<T, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.names().collect::<Vec<_>>())
            .finish()
    }
}

/// Parses positional argument `idx` of a spec, naming it in the error.
pub(crate) fn arg<V: std::str::FromStr>(args: &[&str], idx: usize, what: &str) -> Result<V> {
    let raw = args
        .get(idx)
        .ok_or_else(|| FlmmError::InvalidArgument(format!("missing {what}")))?;
    raw.trim()
        .parse()
        .map_err(|_| FlmmError::InvalidArgument(format!("cannot parse {what} from `{raw}`")))
}

pub(crate) fn expect_arity(args: &[&str], min: usize, max: usize) -> Result<()> {
    if args.len() < min || args.len() > max {
        return Err(FlmmError::InvalidArgument(format!(
            "expected {min}..={max} arguments, got {}",
            args.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn area(&self) -> f64;
    }
    struct Square(f64);
    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    fn shapes() -> Registry<dyn Shape, f64> {
        let mut r = Registry::new("shape");
        r.register("square", "square:<side>", |args, scale: &f64| {
            expect_arity(args, 1, 1)?;
            let side: f64 = arg(args, 0, "side")?;
            Ok(Box::new(Square(side * scale)) as Box<dyn Shape>)
        });
        r
    }

    #[test]
    fn builds_by_name() {
        let r = shapes();
        let s = r.build("square:3", &2.0).unwrap();
        assert_eq!(s.area(), 36.0);
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["square"]);
    }

    #[test]
    fn unknown_name_lists_known() {
        let err = shapes().build("circle:1", &1.0).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("circle") && msg.contains("square"), "{msg}");
    }

    #[test]
    fn bad_args_mention_usage() {
        let err = shapes().build("square:x", &1.0).err().unwrap();
        assert!(err.to_string().contains("square:<side>"));
        assert!(shapes().build("square", &1.0).is_err());
    }
}
