import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permscan.catalog import load_catalog
from permscan.classify import (
    CONF_DESCRIPTION,
    CONF_FALLBACK,
    CONF_STEM,
    ClassifierConfig,
    Operation,
    PermissionLabel,
    RemoteClassifierEndpoint,
    classify_api,
    classify_catalog,
    classify_with_remote,
)
from permscan.errors import RemoteUnavailable, ResponseUnparseable

DATA = resources.files("permscan.data")
CORPUS = load_catalog(str(DATA / "corpus_catalog.json"))
LABELS = json.loads((DATA / "corpus_labels.json").read_text())


def _api(api_id):
    return CORPUS.apis[api_id]


def test_operation_parse_and_rank():
    assert Operation.parse("Modify") is Operation.MODIFY
    assert Operation.CREATE < Operation.VIEW < Operation.COMMENT < Operation.MODIFY < Operation.DELETE


def test_label_round_trip():
    label = PermissionLabel(Operation.MODIFY, "Spreadsheet", True)
    assert PermissionLabel.from_json(label.to_json()) == label


def test_stem_classification():
    label, conf = classify_api(_api("Sheet.clearContents"), CORPUS)
    assert label.operation is Operation.DELETE and conf == CONF_STEM
    label, _ = classify_api(_api("Range.replyToComment"), CORPUS)
    assert label.operation is Operation.COMMENT and not label.touches_sharing


def test_builder_trap_is_view():
    label, conf = classify_api(_api("SpreadsheetApp.newAffineTransformBuilder"), CORPUS)
    assert label.operation is Operation.VIEW and conf == CONF_STEM


def test_wait_trap_is_view():
    label, _ = classify_api(_api("Spreadsheet.waitForAllDataExecutionsCompletion"), CORPUS)
    assert label.operation is Operation.VIEW


def test_sharing_mutators_are_modify():
    for api_id in ("Spreadsheet.addEditor", "Spreadsheet.removeViewer", "Spreadsheet.setOwner"):
        label, _ = classify_api(_api(api_id), CORPUS)
        assert label.operation is Operation.MODIFY and label.touches_sharing, api_id


def test_sharing_reads_keep_view():
    label, _ = classify_api(_api("Spreadsheet.getViewers"), CORPUS)
    assert label.operation is Operation.VIEW and label.touches_sharing


def test_sharing_needs_shareable_parent():
    # Sheet is not a root product, so a marker in a Sheet method is inert
    label, _ = classify_api(_api("Sheet.hideColumn"), CORPUS)
    assert not label.touches_sharing


def test_description_keyword_fallback():
    # no method stem, but the description names the verb
    doc = json.loads((DATA / "corpus_catalog.json").read_text())
    doc["apis"] = [dict(doc["apis"][0])]
    doc["apis"][0].update(
        id="SpreadsheetApp.blorpify", method="blorpify",
        description="Deletes everything in sight.", returns={"void": True}, params=[],
    )
    from permscan.catalog import parse_catalog

    cat = parse_catalog(doc)
    label, conf = classify_api(cat.apis["SpreadsheetApp.blorpify"], cat)
    assert label.operation is Operation.DELETE and conf == CONF_DESCRIPTION


def test_modify_fallback():
    label, conf = classify_api(_api("Spreadsheet.renameActiveSheet"), CORPUS)
    assert label.operation is Operation.MODIFY and conf == CONF_FALLBACK


def test_corpus_accuracy_at_least_38_of_40():
    hits = 0
    for api in CORPUS.apis.values():
        label, _ = classify_api(api, CORPUS)
        want = LABELS[api.id]
        hits += (
            label.operation is Operation.parse(want["operation"])
            and label.touches_sharing == want["touches_sharing"]
        )
    assert len(CORPUS.apis) == 40
    assert hits >= 38


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(sorted(CORPUS.apis)))
def test_classifier_is_deterministic_and_total(api_id):
    first = classify_api(CORPUS.apis[api_id], CORPUS)
    second = classify_api(CORPUS.apis[api_id], CORPUS)
    assert first == second
    label, conf = first
    assert isinstance(label.operation, Operation)
    assert conf in (CONF_STEM, CONF_DESCRIPTION, CONF_FALLBACK)


# --- remote endpoint ------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    reply: dict = {"text": "modify, spreadsheet"}
    status: int = 200
    seen: list = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        _Handler.seen.append((json.loads(body), self.headers.get("Authorization")))
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(json.dumps(self.reply).encode())

    def log_message(self, *args):
        pass


@pytest.fixture()
def remote_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.seen = []
    _Handler.reply = {"text": "modify, spreadsheet"}
    _Handler.status = 200
    yield f"http://127.0.0.1:{server.server_port}/"
    server.shutdown()


def test_remote_returns_parsed_label(remote_server, monkeypatch):
    monkeypatch.setenv("PERMSCAN_CLASSIFIER_TOKEN", "sekrit")
    cfg = ClassifierConfig(remote=RemoteClassifierEndpoint(base_url=remote_server))
    label = classify_with_remote(_api("Spreadsheet.renameActiveSheet"), cfg, CORPUS)
    assert label.operation is Operation.MODIFY
    payload, auth = _Handler.seen[0]
    assert "renameActiveSheet" in payload["prompt"]
    assert auth == "Bearer sekrit"


def test_remote_unparseable(remote_server):
    _Handler.reply = {"text": "no idea"}
    cfg = ClassifierConfig(remote=RemoteClassifierEndpoint(base_url=remote_server))
    with pytest.raises(ResponseUnparseable):
        classify_with_remote(_api("Spreadsheet.renameActiveSheet"), cfg, CORPUS)


def test_remote_http_error(remote_server):
    _Handler.status = 503
    cfg = ClassifierConfig(remote=RemoteClassifierEndpoint(base_url=remote_server))
    with pytest.raises(RemoteUnavailable):
        classify_with_remote(_api("Spreadsheet.renameActiveSheet"), cfg, CORPUS)


def test_remote_unconfigured():
    with pytest.raises(RemoteUnavailable):
        classify_with_remote(_api("Spreadsheet.renameActiveSheet"), ClassifierConfig())


def test_catalog_escalates_only_low_confidence(remote_server):
    _Handler.reply = {"text": "create"}
    cfg = ClassifierConfig(remote=RemoteClassifierEndpoint(base_url=remote_server))
    labels = classify_catalog(CORPUS, cfg)
    # only the two fallback-confidence APIs get escalated
    escalated = {p["prompt"].split("API: ")[1].split("\n")[0] for p, _ in _Handler.seen}
    assert escalated == {"Spreadsheet.duplicateActiveSheet", "Spreadsheet.renameActiveSheet"}
    assert labels["Spreadsheet.duplicateActiveSheet"].operation is Operation.CREATE
    # high-confidence labels are untouched
    assert labels["Sheet.clearContents"].operation is Operation.DELETE


def test_catalog_falls_back_on_dead_remote():
    cfg = ClassifierConfig(
        remote=RemoteClassifierEndpoint(base_url="http://127.0.0.1:1/", timeout=0.2)
    )
    labels = classify_catalog(CORPUS, cfg)
    assert labels["Spreadsheet.renameActiveSheet"].operation is Operation.MODIFY
