use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ir::AppModel;

/// Type hierarchy over the app's own classes. Platform classes only appear
/// as opaque leaves (superclass or interface names without a definition).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClassHierarchy {
    /// user class → declared superclass
    pub parent: BTreeMap<String, String>,
    /// any class → user classes naming it as superclass
    pub subclasses: BTreeMap<String, BTreeSet<String>>,
    /// user class → declared interfaces
    pub implements: BTreeMap<String, BTreeSet<String>>,
    /// any interface → user classes/interfaces declaring it
    implementors: BTreeMap<String, BTreeSet<String>>,
    user: BTreeSet<String>,
}

pub fn build_class_hierarchy(app: &AppModel) -> Result<ClassHierarchy> {
    let mut h = ClassHierarchy::default();
    for (name, class) in &app.classes {
        h.user.insert(name.clone());
        if let Some(sup) = &class.superclass {
            h.parent.insert(name.clone(), sup.clone());
            h.subclasses.entry(sup.clone()).or_default().insert(name.clone());
        }
        if !class.interfaces.is_empty() {
            h.implements
                .insert(name.clone(), class.interfaces.iter().cloned().collect());
        }
        for i in &class.interfaces {
            h.implementors.entry(i.clone()).or_default().insert(name.clone());
        }
    }
    h.check_acyclic()?;
    Ok(h)
}

impl ClassHierarchy {
    fn direct_supertypes(&self, class: &str) -> impl Iterator<Item = &String> {
        self.parent
            .get(class)
            .into_iter()
            .chain(self.implements.get(class).into_iter().flatten())
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        for start in &self.user {
            if state.contains_key(start.as_str()) {
                continue;
            }
            let mut stack: Vec<(&str, Vec<&String>)> =
                vec![(start.as_str(), self.direct_supertypes(start).collect())];
            state.insert(start, 1);
            while let Some((node, pending)) = stack.last_mut() {
                match pending.pop() {
                    Some(next) if self.user.contains(next) => match state.get(next.as_str()) {
                        Some(1) => return Err(Error::CyclicHierarchy(next.clone())),
                        Some(_) => {}
                        None => {
                            state.insert(next, 1);
                            let sup = self.direct_supertypes(next).collect();
                            stack.push((next.as_str(), sup));
                        }
                    },
                    Some(_) => {}
                    None => {
                        state.insert(node, 2);
                        stack.pop();
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_user_class(&self, class: &str) -> bool {
        self.user.contains(class)
    }

    /// Superclass chain starting at `class` itself, ending at the first
    /// platform class (inclusive).
    pub fn superclass_chain(&self, class: &str) -> Vec<String> {
        let mut chain = vec![class.to_string()];
        let mut cur = class;
        while let Some(p) = self.parent.get(cur) {
            chain.push(p.clone());
            cur = p;
        }
        chain
    }

    /// All transitive supertypes (superclasses and interfaces) of `class`,
    /// excluding `class`.
    pub fn supertypes(&self, class: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([class]);
        while let Some(c) = queue.pop_front() {
            for s in self.direct_supertypes(c) {
                if seen.insert(s.clone()) {
                    queue.push_back(s);
                }
            }
        }
        seen
    }

    pub fn is_subtype(&self, class: &str, of: &str) -> bool {
        class == of || self.supertypes(class).contains(of)
    }

    /// User classes that are subtypes of `ty` (including `ty` itself when it
    /// is a user class): the receiver cone used for virtual dispatch.
    pub fn cone(&self, ty: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if self.user.contains(ty) {
            out.insert(ty.to_string());
        }
        let mut queue: VecDeque<String> = VecDeque::from([ty.to_string()]);
        let mut seen: BTreeSet<String> = BTreeSet::from([ty.to_string()]);
        while let Some(c) = queue.pop_front() {
            let subs = self
                .subclasses
                .get(&c)
                .into_iter()
                .flatten()
                .chain(self.implementors.get(&c).into_iter().flatten());
            for s in subs {
                if seen.insert(s.clone()) {
                    out.insert(s.clone());
                    queue.push_back(s.clone());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::ClassDef;

    fn class(name: &str, sup: &str, ifaces: &[&str]) -> ClassDef {
        ClassDef {
            name: name.into(),
            flags: vec![],
            superclass: Some(sup.into()),
            interfaces: ifaces.iter().map(|s| s.to_string()).collect(),
            methods: vec![],
        }
    }

    fn app(classes: Vec<ClassDef>) -> AppModel {
        AppModel {
            app_id: "t".into(),
            classes: classes.into_iter().map(|c| (c.name.clone(), c)).collect(),
            components: vec![],
            metadata: Default::default(),
            diagnostics: vec![],
        }
    }

    #[test]
    fn parent_and_subclasses() {
        let h = build_class_hierarchy(&app(vec![
            class("LA;", "LB;", &[]),
            class("LB;", "Ljava/lang/Object;", &[]),
        ]))
        .unwrap();
        assert_eq!(h.parent["LA;"], "LB;");
        assert_eq!(h.subclasses["LB;"], BTreeSet::from(["LA;".to_string()]));
        assert_eq!(h.superclass_chain("LA;"), vec!["LA;", "LB;", "Ljava/lang/Object;"]);
        assert_eq!(h.cone("LB;"), BTreeSet::from(["LA;".to_string(), "LB;".into()]));
        assert_eq!(h.cone("Ljava/lang/Object;").len(), 2);
    }

    #[test]
    fn cycle_detected() {
        let err = build_class_hierarchy(&app(vec![class("LA;", "LB;", &[]), class("LB;", "LA;", &[])]))
            .unwrap_err();
        assert!(matches!(err, Error::CyclicHierarchy(_)));
    }

    #[test]
    fn interfaces_recorded() {
        let h = build_class_hierarchy(&app(vec![class(
            "LL;",
            "Ljava/lang/Object;",
            &["Landroid/view/View$OnClickListener;"],
        )]))
        .unwrap();
        assert!(h.implements["LL;"].contains("Landroid/view/View$OnClickListener;"));
        assert!(h.is_subtype("LL;", "Landroid/view/View$OnClickListener;"));
        assert_eq!(
            h.cone("Landroid/view/View$OnClickListener;"),
            BTreeSet::from(["LL;".to_string()])
        );
    }
}
