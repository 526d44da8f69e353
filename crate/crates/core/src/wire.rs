//! Protocol v1: newline-delimited JSON messages over TCP, and the
//! `.docl.json` parameter document shared by edge trainers and the service.
//!
//! Every message is one line of UTF-8 JSON ending in `\n`. Keys appear in a
//! fixed order and doubles use the shortest decimal that round-trips, so
//! serializing the same message twice yields identical bytes.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderParams, FeatureVector};
use crate::error::{Error, Result};
use crate::filter::{Action, Decision, FilterRegistry, GuardConfig, SharedRegistry};
use crate::trainer::{PrivacyProfile, TrainedUserModel};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";
/// Environment variable overriding [`DEFAULT_ADDR`].
pub const ADDR_ENV: &str = "DOCL_ADDR";
pub const PARAMS_EXTENSION: &str = "docl.json";

/// Longest request line the service will buffer.
const MAX_LINE_BYTES: usize = 64 << 20;

/// Endpoint from `DOCL_ADDR`, falling back to the default.
pub fn default_endpoint() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| DEFAULT_ADDR.to_string())
}

/// Serialized parameters and privacy profile of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDocument {
    pub version: u32,
    pub user_id: String,
    pub d: usize,
    pub m: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub w_prime: Vec<f64>,
    pub b_prime: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub training_size: usize,
}

impl ParamsDocument {
    pub fn from_model(model: &TrainedUserModel) -> Self {
        let p = &model.params;
        ParamsDocument {
            version: PROTOCOL_VERSION,
            user_id: model.user_id.clone(),
            d: p.input_dim(),
            m: p.latent_dim(),
            w: p.w().to_vec(),
            b: p.b().to_vec(),
            w_prime: p.w_prime().to_vec(),
            b_prime: p.b_prime().to_vec(),
            mu: model.profile.mu,
            sigma: model.profile.sigma,
            training_size: model.training_size,
        }
    }

    /// Structural checks that do not need the numeric contents.
    pub fn validate(&self) -> Result<()> {
        if self.version != PROTOCOL_VERSION {
            return Err(Error::protocol(
                "unsupported_version",
                format!(
                    "params document version {} (expected {PROTOCOL_VERSION})",
                    self.version
                ),
            ));
        }
        let (d, m) = (self.d, self.m);
        for (name, expected, got) in [
            ("w", m.checked_mul(d), self.w.len()),
            ("b", Some(m), self.b.len()),
            ("w_prime", d.checked_mul(m), self.w_prime.len()),
            ("b_prime", Some(d), self.b_prime.len()),
        ] {
            if expected != Some(got) {
                return Err(Error::protocol(
                    "length_mismatch",
                    format!("`{name}` has {got} values, expected {expected:?} for d={d}, m={m}"),
                ));
            }
        }
        Ok(())
    }

    pub fn into_model(self) -> Result<TrainedUserModel> {
        self.validate()?;
        let params =
            AutoencoderParams::new(self.d, self.m, self.w, self.b, self.w_prime, self.b_prime)?;
        let profile = PrivacyProfile::new(self.mu, self.sigma)?;
        if self.training_size == 0 {
            return Err(Error::contract("training_size must be at least 1"));
        }
        Ok(TrainedUserModel {
            user_id: self.user_id,
            params,
            profile,
            training_size: self.training_size,
        })
    }

    fn floats(&self) -> impl Iterator<Item = f64> + '_ {
        self.w
            .iter()
            .chain(&self.b)
            .chain(&self.w_prime)
            .chain(&self.b_prime)
            .copied()
            .chain([self.mu, self.sigma])
    }

    /// Canonical single-line JSON followed by a newline.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.floats().any(|v| !v.is_finite()) {
            return Err(Error::protocol(
                "non_finite",
                "params document contains a non-finite number",
            ));
        }
        let mut out =
            serde_json::to_vec(self).map_err(|e| Error::protocol("serialize", e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_slice(bytes)
            .map_err(|e| Error::protocol("malformed", e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }
}

pub fn write_params_file(path: impl AsRef<Path>, model: &TrainedUserModel) -> Result<()> {
    std::fs::write(path, ParamsDocument::from_model(model).to_bytes()?)?;
    Ok(())
}

pub fn read_params_file(path: impl AsRef<Path>) -> Result<TrainedUserModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    ParamsDocument::from_bytes(&bytes)
        .and_then(ParamsDocument::into_model)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Register {
        params_document: ParamsDocument,
    },
    Classify {
        uploader: Option<String>,
        features: Vec<f64>,
    },
    Ack {
        user_id: String,
    },
    Decision {
        action: Action,
        attributed_user: Option<String>,
        min_dissimilarity: Option<f64>,
        in_interval: bool,
    },
    Error {
        code: String,
        detail: String,
    },
}

const MESSAGE_TYPES: [&str; 5] = ["register", "classify", "ack", "decision", "error"];

impl Message {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Message::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let finite = match self {
            Message::Register { params_document } => params_document.floats().all(f64::is_finite),
            Message::Classify { features, .. } => features.iter().all(|v| v.is_finite()),
            Message::Decision {
                min_dissimilarity, ..
            } => min_dissimilarity.is_none_or(f64::is_finite),
            Message::Ack { .. } | Message::Error { .. } => true,
        };
        if finite {
            Ok(())
        } else {
            Err(Error::protocol(
                "non_finite",
                "message contains a non-finite number",
            ))
        }
    }
}

impl From<&Decision> for Message {
    fn from(d: &Decision) -> Self {
        Message::Decision {
            action: d.action,
            attributed_user: d.attributed_user.clone(),
            min_dissimilarity: d.min_dissimilarity,
            in_interval: d.in_interval,
        }
    }
}

pub fn serialize_message(msg: &Message) -> Result<Vec<u8>> {
    msg.check_finite()?;
    let mut out =
        serde_json::to_vec(msg).map_err(|e| Error::protocol("serialize", e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Parses one line, with or without its trailing newline.
pub fn parse_message(bytes: &[u8]) -> Result<Message> {
    let line = bytes
        .strip_suffix(b"\n")
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .unwrap_or(bytes);
    if line.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::protocol("malformed", "empty line"));
    }
    if line.contains(&b'\n') {
        return Err(Error::protocol(
            "malformed",
            "message spans more than one line",
        ));
    }
    let value: serde_json::Value =
        serde_json::from_slice(line).map_err(|e| Error::protocol("malformed", e.to_string()))?;
    let tag = value
        .get("type")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| Error::protocol("malformed", "missing string field `type`"))?;
    if !MESSAGE_TYPES.contains(&tag) {
        return Err(Error::protocol(
            "unknown_type",
            format!("unknown message type `{tag}`"),
        ));
    }
    let msg: Message =
        serde_json::from_value(value).map_err(|e| Error::protocol("malformed", e.to_string()))?;
    if let Message::Register { params_document } = &msg {
        params_document.validate()?;
    }
    Ok(msg)
}

/// Request handling independent of any transport.
#[derive(Debug, Clone)]
pub struct FilterService {
    registry: SharedRegistry,
    guard: GuardConfig,
}

impl FilterService {
    pub fn new(registry: FilterRegistry, guard: GuardConfig) -> Self {
        FilterService {
            registry: SharedRegistry::new(registry),
            guard,
        }
    }

    pub fn registry(&self) -> &SharedRegistry {
        &self.registry
    }

    pub fn handle(&self, request: Message) -> Message {
        match self.dispatch(request) {
            Ok(reply) => reply,
            Err(e) => Message::error(e.code(), e.to_string()),
        }
    }

    /// Parses, handles and serializes one request line.
    pub fn handle_line(&self, line: &[u8]) -> Vec<u8> {
        let reply = match parse_message(line) {
            Ok(request) => self.handle(request),
            Err(e) => Message::error(e.code(), e.to_string()),
        };
        serialize_message(&reply).unwrap_or_else(|e| {
            serialize_message(&Message::error("internal", e.to_string()))
                .expect("error reply is finite")
        })
    }

    fn dispatch(&self, request: Message) -> Result<Message> {
        match request {
            Message::Register { params_document } => {
                let model = params_document.into_model()?;
                let user_id = model.user_id.clone();
                self.registry.register_user(model)?;
                Ok(Message::Ack { user_id })
            }
            Message::Classify { uploader, features } => {
                let x = FeatureVector::new(features)
                    .map_err(|e| Error::protocol("invalid_features", e.to_string()))?;
                let decision = self
                    .registry
                    .filter_image(&self.guard, uploader.as_deref(), &x)?;
                Ok(Message::from(&decision))
            }
            other => Err(Error::protocol(
                "unexpected_message",
                format!(
                    "the service does not accept `{}` requests",
                    message_type(&other)
                ),
            )),
        }
    }
}

fn message_type(msg: &Message) -> &'static str {
    match msg {
        Message::Register { .. } => "register",
        Message::Classify { .. } => "classify",
        Message::Ack { .. } => "ack",
        Message::Decision { .. } => "decision",
        Message::Error { .. } => "error",
    }
}

/// A running service bound to a local address.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    service: FilterService,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &FilterService {
        &self.service
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

/// Binds `endpoint` and serves in a background thread.
pub fn spawn_server(service: FilterService, endpoint: impl ToSocketAddrs) -> Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let accept = {
        let stop = Arc::clone(&stop);
        let service = service.clone();
        thread::spawn(move || accept_loop(listener, service, stop))
    };
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
        service,
    })
}

/// Binds `endpoint` and serves until the process exits.
pub fn serve(
    registry: FilterRegistry,
    guard: GuardConfig,
    endpoint: impl ToSocketAddrs,
) -> Result<()> {
    let listener = TcpListener::bind(endpoint)?;
    accept_loop(
        listener,
        FilterService::new(registry, guard),
        Arc::new(AtomicBool::new(false)),
    );
    Ok(())
}

fn accept_loop(listener: TcpListener, service: FilterService, stop: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let service = service.clone();
        thread::spawn(move || {
            let _ = handle_connection(stream, &service);
        });
    }
}

fn handle_connection(stream: TcpStream, service: &FilterService) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = (&mut reader)
            .take(MAX_LINE_BYTES as u64)
            .read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(());
        }
        if line.last() != Some(&b'\n') && n == MAX_LINE_BYTES {
            let reply = Message::error("malformed", "request line too long");
            writer.write_all(&serialize_message(&reply).expect("finite"))?;
            return writer.shutdown(Shutdown::Both);
        }
        writer.write_all(&service.handle_line(&line))?;
        writer.flush()?;
    }
}

/// Blocking request/response client over one connection.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn connect(endpoint: impl ToSocketAddrs) -> Result<Self> {
        Client::connect_timeout(endpoint, Self::DEFAULT_TIMEOUT)
    }

    pub fn connect_timeout(endpoint: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let mut last_err = None;
        for addr in endpoint.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    stream.set_nodelay(true)?;
                    let writer = stream.try_clone()?;
                    return Ok(Client {
                        reader: BufReader::new(stream),
                        writer,
                    });
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err
            .unwrap_or_else(|| {
                std::io::Error::new(std::io::ErrorKind::AddrNotAvailable, "no address resolved")
            })
            .into())
    }

    /// Sends one message and reads one reply.
    pub fn request(&mut self, msg: &Message) -> Result<Message> {
        self.writer.write_all(&serialize_message(msg)?)?;
        self.writer.flush()?;
        let mut line = Vec::new();
        if self.reader.read_until(b'\n', &mut line)? == 0 {
            return Err(Error::protocol(
                "closed",
                "connection closed before a reply",
            ));
        }
        parse_message(&line)
    }

    /// Sends raw bytes (which should end in a newline) and reads one reply.
    pub fn request_raw(&mut self, line: &[u8]) -> Result<Message> {
        self.writer.write_all(line)?;
        self.writer.flush()?;
        let mut reply = Vec::new();
        if self.reader.read_until(b'\n', &mut reply)? == 0 {
            return Err(Error::protocol(
                "closed",
                "connection closed before a reply",
            ));
        }
        parse_message(&reply)
    }

    pub fn register(&mut self, doc: ParamsDocument) -> Result<String> {
        match self.request(&Message::Register {
            params_document: doc,
        })? {
            Message::Ack { user_id } => Ok(user_id),
            other => Err(unexpected_reply(other)),
        }
    }

    pub fn classify(&mut self, uploader: Option<&str>, features: &[f64]) -> Result<Decision> {
        let msg = Message::Classify {
            uploader: uploader.map(str::to_string),
            features: features.to_vec(),
        };
        match self.request(&msg)? {
            Message::Decision {
                action,
                attributed_user,
                min_dissimilarity,
                in_interval,
            } => Ok(Decision {
                action,
                attributed_user,
                min_dissimilarity,
                in_interval,
            }),
            other => Err(unexpected_reply(other)),
        }
    }
}

fn unexpected_reply(msg: Message) -> Error {
    match msg {
        Message::Error { code, detail } => Error::Remote { code, detail },
        other => Error::protocol(
            "unexpected_reply",
            format!("unexpected `{}` reply", message_type(&other)),
        ),
    }
}

pub fn client_register(endpoint: impl ToSocketAddrs, doc: ParamsDocument) -> Result<String> {
    Client::connect(endpoint)?.register(doc)
}

pub fn client_classify(
    endpoint: impl ToSocketAddrs,
    uploader: Option<&str>,
    features: &[f64],
) -> Result<Decision> {
    Client::connect(endpoint)?.classify(uploader, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::init_params;

    fn doc() -> ParamsDocument {
        let model = TrainedUserModel {
            user_id: "u0".into(),
            params: init_params(4, 2, 3).unwrap(),
            profile: PrivacyProfile::new(0.25, 0.05).unwrap(),
            training_size: 10,
        };
        ParamsDocument::from_model(&model)
    }

    #[test]
    fn ack_is_one_tagged_line() {
        let bytes = serialize_message(&Message::Ack {
            user_id: "u0".into(),
        })
        .unwrap();
        let s = String::from_utf8(bytes).unwrap();
        assert_eq!(s, "{\"type\":\"ack\",\"user_id\":\"u0\"}\n");
    }

    #[test]
    fn serialization_is_canonical() {
        let m = Message::Register {
            params_document: doc(),
        };
        let a = serialize_message(&m).unwrap();
        assert_eq!(a, serialize_message(&m).unwrap());
        assert_eq!(a.iter().filter(|b| **b == b'\n').count(), 1);
        assert_eq!(parse_message(&a).unwrap(), m);
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(parse_message(b"").unwrap_err().code(), "malformed");
        assert_eq!(parse_message(b"\n").unwrap_err().code(), "malformed");
        assert_eq!(
            parse_message(b"{\"type\":\"ack\"").unwrap_err().code(),
            "malformed"
        );
        assert_eq!(
            parse_message(b"{\"type\":\"hello\"}\n").unwrap_err().code(),
            "unknown_type"
        );
        let nan = b"{\"type\":\"classify\",\"uploader\":null,\"features\":[NaN]}\n";
        assert_eq!(parse_message(nan).unwrap_err().code(), "malformed");
        assert_eq!(
            parse_message(&[0xff, 0xfe, b'\n']).unwrap_err().code(),
            "malformed"
        );
    }

    #[test]
    fn register_length_and_version_checks() {
        let mut d = doc();
        d.w.pop();
        let line = serde_json::to_string(&Message::Register { params_document: d }).unwrap();
        assert_eq!(
            parse_message(line.as_bytes()).unwrap_err().code(),
            "length_mismatch"
        );

        let mut d = doc();
        d.version = 2;
        let line = serde_json::to_string(&Message::Register { params_document: d }).unwrap();
        assert_eq!(
            parse_message(line.as_bytes()).unwrap_err().code(),
            "unsupported_version"
        );
    }

    #[test]
    fn non_finite_rejected_on_serialize() {
        let m = Message::Classify {
            uploader: None,
            features: vec![0.1, f64::INFINITY],
        };
        assert!(serialize_message(&m).is_err());
        let mut d = doc();
        d.mu = f64::NAN;
        assert!(d.to_bytes().is_err());
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("u0.{PARAMS_EXTENSION}"));
        let model = doc().into_model().unwrap();
        write_params_file(&path, &model).unwrap();
        assert_eq!(read_params_file(&path).unwrap(), model);
    }

    #[test]
    fn service_rejects_replies_as_requests() {
        let svc = FilterService::new(FilterRegistry::new(), GuardConfig::default());
        match svc.handle(Message::Ack {
            user_id: "x".into(),
        }) {
            Message::Error { code, .. } => assert_eq!(code, "unexpected_message"),
            other => panic!("{other:?}"),
        }
        let reply = parse_message(
            &svc.handle_line(b"{\"type\":\"classify\",\"uploader\":null,\"features\":[0.5]}\n"),
        )
        .unwrap();
        assert_eq!(
            reply,
            Message::error("empty_registry", "the filter registry is empty")
        );
    }
}
