//! Provider clients against a local HTTP server that records requests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};
use trajeval::embedder::{
    EmbedError, Embedder, EmbeddingCache, EmbeddingProvider, HttpEmbeddingProvider, ProviderError,
};
use trajeval::synthgen::{GenerationParams, HttpGenerator, TextGenerator};

#[derive(Debug, Clone)]
struct Recorded {
    method: String,
    path: String,
    content_type: String,
    body: Value,
}

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

/// Serves requests until the test process ends. Returns the base URL.
fn serve(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    let handler: Arc<Handler> = Arc::from(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            let seen = seen.clone();
            let handler = handler.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut writer = stream;
                loop {
                    let mut request_line = String::new();
                    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                        return;
                    }
                    let mut parts = request_line.split_whitespace();
                    let method = parts.next().unwrap_or_default().to_string();
                    let path = parts.next().unwrap_or_default().to_string();
                    let (mut length, mut content_type) = (0usize, String::new());
                    loop {
                        let mut header = String::new();
                        reader.read_line(&mut header).unwrap();
                        let header = header.trim_end();
                        if header.is_empty() {
                            break;
                        }
                        let (name, value) = header.split_once(':').unwrap();
                        match name.to_ascii_lowercase().as_str() {
                            "content-length" => length = value.trim().parse().unwrap(),
                            "content-type" => content_type = value.trim().to_string(),
                            _ => {}
                        }
                    }
                    let mut body = vec![0u8; length];
                    reader.read_exact(&mut body).unwrap();
                    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                    let (status, reply) = handler(&body);
                    seen.lock().unwrap().push(Recorded { method, path, content_type, body });
                    let head = format!(
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n",
                        reply.len()
                    );
                    writer.write_all(head.as_bytes()).unwrap();
                    writer.write_all(reply.as_bytes()).unwrap();
                }
            });
        }
    });
    (format!("http://{addr}"), log)
}

fn fake_vector(text: &str) -> Vec<f64> {
    vec![text.len() as f64, 1.0, 0.5]
}

fn embed_handler(body: &Value) -> (u16, String) {
    let texts = body["texts"].as_array().unwrap();
    let embeddings: Vec<Vec<f64>> = texts.iter().map(|t| fake_vector(t.as_str().unwrap())).collect();
    (200, json!({ "dim": 3, "embeddings": embeddings }).to_string())
}

#[test]
fn embed_request_shape_and_batching() {
    let (base, log) = serve(Box::new(embed_handler));
    let provider = HttpEmbeddingProvider::new(&base, "mini", 3, 2);
    let embedder = Embedder::new(Box::new(provider), EmbeddingCache::in_memory());
    let texts = ["a", "bb", "a", "ccc", "dddd"];
    let vectors = embedder.embed_texts(&texts).unwrap();
    for (t, v) in texts.iter().zip(&vectors) {
        assert_eq!(v.as_slice(), fake_vector(t).as_slice());
    }

    let log = log.lock().unwrap().clone();
    // 4 distinct texts at 2 per request
    assert_eq!(log.len(), 2);
    for r in &log {
        assert_eq!((r.method.as_str(), r.path.as_str()), ("POST", "/embed"));
        assert!(r.content_type.starts_with("application/json"), "{}", r.content_type);
        assert_eq!(r.body["model"], "mini");
    }
    assert_eq!(log[0].body["texts"], json!(["a", "bb"]));
    assert_eq!(log[1].body["texts"], json!(["ccc", "dddd"]));

    // everything is cached now
    embedder.embed_texts(&["dddd", "a"]).unwrap();
    assert_eq!(embedder.cache().len(), 4);
}

#[test]
fn embed_dim_disagreement_is_a_contract_error() {
    let (base, _) = serve(Box::new(embed_handler));
    let provider = HttpEmbeddingProvider::new(&base, "mini", 4, 8);
    assert!(matches!(provider.embed_batch(&["x"]), Err(ProviderError::Contract(_))));
}

#[test]
fn embed_count_disagreement_is_a_contract_error() {
    let (base, _) = serve(Box::new(|_| (200, json!({ "dim": 3, "embeddings": [[1.0, 0.0, 0.0]] }).to_string())));
    let embedder = Embedder::new(Box::new(HttpEmbeddingProvider::new(&base, "m", 3, 8)), EmbeddingCache::in_memory());
    assert!(matches!(embedder.embed_texts(&["x", "y"]), Err(EmbedError::Contract(_))));
    assert!(embedder.cache().is_empty());
}

#[test]
fn server_error_reports_first_uncached_index() {
    let (base, _) = serve(Box::new(|_| (503, "{}".into())));
    let embedder = Embedder::new(Box::new(HttpEmbeddingProvider::new(&base, "m", 3, 8)), EmbeddingCache::in_memory());
    match embedder.embed_texts(&["x", "y"]) {
        Err(EmbedError::Unavailable { index, reason }) => {
            assert_eq!(index, 0);
            assert!(reason.contains("503"), "{reason}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let embedder = Embedder::new(
        Box::new(HttpEmbeddingProvider::new(&format!("http://127.0.0.1:{port}"), "m", 3, 8)),
        EmbeddingCache::in_memory(),
    );
    assert!(matches!(embedder.embed_texts(&["x"]), Err(EmbedError::Unavailable { index: 0, .. })));
}

#[test]
fn generate_request_shape() {
    let (base, log) = serve(Box::new(|body| {
        let prompt = body["prompt"].as_str().unwrap();
        (200, json!({ "text": format!("echo: {prompt}") }).to_string())
    }));
    let generator = HttpGenerator::new(&format!("{base}/"));
    let params = GenerationParams { temperature: 0.7, top_p: 0.9, max_retries: 1 };
    assert_eq!(generator.generate("héllo\n{x}", &params).unwrap(), "echo: héllo\n{x}");
    let r = log.lock().unwrap()[0].clone();
    assert_eq!((r.method.as_str(), r.path.as_str()), ("POST", "/generate"));
    assert_eq!(r.body, json!({ "prompt": "héllo\n{x}", "temperature": 0.7, "top_p": 0.9 }));
}

#[test]
fn generate_malformed_body_is_an_error() {
    let (base, _) = serve(Box::new(|_| (200, json!({ "output": "x" }).to_string())));
    let generator = HttpGenerator::new(&base);
    let err = generator.generate("p", &GenerationParams::default()).unwrap_err();
    assert!(err.to_string().contains("malformed"), "{err}");
}

#[test]
fn client_error_is_a_contract_error() {
    let (base, _) = serve(Box::new(|_| (413, "{}".into())));
    let provider = HttpEmbeddingProvider::new(&base, "m", 3, 8);
    assert!(matches!(provider.embed_batch(&["x"]), Err(ProviderError::Contract(_))));
}
