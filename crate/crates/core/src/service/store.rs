//! Directory-of-JSON session store and the in-memory session registry.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{ServiceError, Session, SessionRecord};

/// One `<id>.json` file per session under `dir`.
#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Store, ServiceError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| ServiceError::Store(format!("{}: {e}", dir.display())))?;
        Ok(Store { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        // Ids are uuids; refuse anything that could escape the directory.
        let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        ok.then(|| self.dir.join(format!("{id}.json")))
    }

    /// Writes the record through a temporary file so readers never see a
    /// half-written session.
    pub fn save(&self, record: &SessionRecord) -> Result<(), ServiceError> {
        let path =
            self.path(&record.id).ok_or_else(|| ServiceError::Store(format!("bad session id `{}`", record.id)))?;
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(record).map_err(|e| ServiceError::Store(e.to_string()))?;
        fs::write(&tmp, body).map_err(|e| ServiceError::Store(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &path).map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))
    }

    pub fn load(&self, id: &str) -> Result<Option<SessionRecord>, ServiceError> {
        let Some(path) = self.path(id) else { return Ok(None) };
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ServiceError::Store(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ServiceError::Store(format!("{}: {e}", path.display()))),
        }
    }
}

/// Sessions by id. Each session has its own lock, so requests on different
/// sessions never wait for each other.
#[derive(Debug, Default)]
pub struct Service {
    store: Option<Store>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl Service {
    pub fn new(store: Option<Store>) -> Service {
        Service { store, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn store(&self) -> Option<&Store> {
        self.store.as_ref()
    }

    pub fn create(&self, domain: &str, problem: &str, plan: Option<&str>) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let s = Session::create(domain, problem, plan)?;
        self.persist(&s)?;
        let id = s.id().to_string();
        let handle = Arc::new(Mutex::new(s));
        self.sessions.lock().expect("registry lock").insert(id, Arc::clone(&handle));
        Ok(handle)
    }

    /// Looks a session up, rebuilding it from the store on first use.
    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        if let Some(h) = self.sessions.lock().expect("registry lock").get(id) {
            return Ok(Arc::clone(h));
        }
        let record = match &self.store {
            Some(store) => store.load(id)?,
            None => None,
        }
        .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        let (session, _) = Session::replay(&record)?;
        let mut map = self.sessions.lock().expect("registry lock");
        let h = map.entry(id.to_string()).or_insert_with(|| Arc::new(Mutex::new(session)));
        Ok(Arc::clone(h))
    }

    /// Runs `f` under the session's lock and persists the session after
    /// any successful change.
    pub fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let handle = self.get(id)?;
        let mut s = handle.lock().expect("session lock");
        let before = s.record().transcript.len();
        let out = f(&mut s)?;
        if s.record().transcript.len() != before {
            self.persist(&s)?;
        }
        Ok(out)
    }

    fn persist(&self, s: &Session) -> Result<(), ServiceError> {
        match &self.store {
            Some(store) => store.save(s.record()),
            None => Ok(()),
        }
    }
}
