//! Canned-reply provider for tests, fixtures and offline runs.
//!
//! Replies are addressed by template and the SHA-256 of the request
//! transcript. On disk a store is one directory per template holding
//! `<hash>.txt` files, plus an optional `default.txt` used on a miss.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Mutex;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::provider::{ChatProvider, ChatRequest, ProviderError, Role};
use super::templates::TemplateId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Fallback {
    #[default]
    Error,
    /// Reply with the text of the last user message.
    Echo,
}

#[derive(Debug, Default)]
pub struct StubProvider {
    replies: BTreeMap<(TemplateId, String), String>,
    defaults: BTreeMap<TemplateId, String>,
    fallback: Fallback,
    vision: bool,
    down: BTreeSet<TemplateId>,
    calls: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl StubProvider {
    pub fn new() -> Self {
        Self { vision: true, ..Self::default() }
    }

    /// Loads every `<template>/<key>.txt` under `dir`. Unknown directory
    /// names are ignored.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut stub = Self::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let Some(template) = entry.file_name().to_str().and_then(TemplateId::parse) else { continue };
            let mut files: Vec<_> = fs::read_dir(entry.path())?.collect::<Result<_, _>>()?;
            files.sort_by_key(|f| f.file_name());
            for file in files {
                let path = file.path();
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let text = fs::read_to_string(&path)?;
                if stem == "default" {
                    stub.defaults.insert(template, text);
                } else {
                    stub.replies.insert((template, stem.to_owned()), text);
                }
            }
        }
        Ok(stub)
    }

    pub fn write_reply(dir: &Path, template: TemplateId, key: &str, reply: &str) -> io::Result<()> {
        let sub = dir.join(template.as_str());
        fs::create_dir_all(&sub)?;
        fs::write(sub.join(format!("{key}.txt")), reply)
    }

    pub fn insert(&mut self, template: TemplateId, key: &str, reply: impl Into<String>) {
        self.replies.insert((template, key.to_owned()), reply.into());
    }

    pub fn insert_for(&mut self, request: &ChatRequest, reply: impl Into<String>) {
        self.insert(request.template, &request.prompt_hash(), reply);
    }

    pub fn with_default(mut self, template: TemplateId, reply: impl Into<String>) -> Self {
        self.defaults.insert(template, reply.into());
        self
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn with_vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }

    /// Requests for these templates fail as if the endpoint were down.
    pub fn with_outage(mut self, templates: impl IntoIterator<Item = TemplateId>) -> Self {
        self.down.extend(templates);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, template: TemplateId) -> usize {
        self.requests().iter().filter(|r| r.template == template).count()
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("stub log poisoned").clone()
    }

    pub fn last_request(&self) -> Option<ChatRequest> {
        self.log.lock().expect("stub log poisoned").last().cloned()
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatProvider for StubProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("stub log poisoned").push(request.clone());
        if self.down.contains(&request.template) {
            return Err(ProviderError::Unreachable(format!("stub outage for {}", request.template)));
        }
        if request.has_images() && !self.vision {
            return Err(ProviderError::NoVision);
        }
        let key = request.prompt_hash();
        if let Some(reply) = self.replies.get(&(request.template, key.clone())) {
            return Ok(reply.clone());
        }
        if let Some(reply) = self.defaults.get(&request.template) {
            return Ok(reply.clone());
        }
        match self.fallback {
            Fallback::Echo => Ok(request
                .messages
                .iter()
                .rev()
                .find(|m| m.role == Role::User)
                .map(|m| m.joined_text())
                .unwrap_or_default()),
            Fallback::Error => Err(ProviderError::NoCannedReply { template: request.template, key }),
        }
    }

    fn supports_vision(&self) -> bool {
        self.vision
    }

    fn name(&self) -> &str {
        "stub"
    }
}
