"""Local HTTP facade over the project store, retrieval, and comparison.

Every endpoint is a thin adapter over the corresponding library call; no
statistics or ranking logic lives here. Writes (themes, reviews) are
serialized behind one lock; searches and other reads never take it. All
responses are JSON under /api/v1, and every non-success response carries
exactly one {"code", "message"} error body.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import artifacts
from .embed import CachedEmbedder, provider_from_spec
from .errors import (
    ConflictError,
    IntegrityError,
    InvalidInput,
    MaskboardError,
    NotFoundError,
    ProviderUnavailable,
)
from .explain import explanation_from_record, render_highlights
from .search import top_matches
from .stats import compare_theme
from .store import Project
from .themes import DEFAULT_REVIEW_WINDOW, ReviewLog, add_members, new_theme

PAGE_SIZE = 50
API = "/api/v1"

_STATUS = {
    "invalid": 400,
    "not_found": 404,
    "conflict": 409,
    "integrity": 500,
    "provider_unavailable": 503,
}


def _error_code(exc: MaskboardError) -> str:
    if isinstance(exc, NotFoundError):
        return "not_found"
    if isinstance(exc, ConflictError):
        return "conflict"
    if isinstance(exc, IntegrityError):
        return "integrity"
    if isinstance(exc, ProviderUnavailable):
        return "provider_unavailable"
    return "invalid"


def _theme_doc(theme) -> dict:
    return {"theme_id": theme.theme_id, "name": theme.name, "members": list(theme.members), "notes": theme.notes}


def create_app(project: Project, ui_dir: str | Path | None = None, token: str | None = None) -> FastAPI:
    app = FastAPI(title="maskboard", version=project.manifest.get("tool_version", ""))
    write_lock = threading.Lock()
    review_log = ReviewLog(project.reviews_path)

    @app.exception_handler(MaskboardError)
    async def maskboard_error(_req: Request, exc: MaskboardError):
        code = _error_code(exc)
        return JSONResponse({"code": code, "message": str(exc)}, status_code=_STATUS[code])

    @app.exception_handler(RequestValidationError)
    async def validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse({"code": "invalid", "message": str(exc.errors()[:1])}, status_code=400)

    if token:
        @app.middleware("http")
        async def check_token(request: Request, call_next):
            if request.url.path.startswith(API) and request.headers.get("authorization") != f"Bearer {token}":
                return JSONResponse({"code": "invalid", "message": "missing or bad token"}, status_code=401)
            return await call_next(request)

    def embedder_for_index(index) -> CachedEmbedder:
        provider = provider_from_spec(index.provider_id, dimension=index.dimension)
        return CachedEmbedder(provider, cache_dir=project.cache_dir)

    # -- listings ----------------------------------------------------------

    @app.get(API + "/corpora")
    def list_corpora():
        out = []
        for name in project.list_entries("corpora"):
            meta = project.meta("corpora", name)
            out.append({"name": name, "posts": meta.get("posts", 0),
                        "explanation_sets": artifacts.explanation_sets_for_corpus(project, name)})
        return {"corpora": out}

    @app.get(API + "/indexes")
    def list_indexes():
        out = []
        for name in project.list_entries("indexes"):
            meta = project.meta("indexes", name)
            out.append({"name": name, **meta})
        return {"indexes": out}

    # -- explanations ------------------------------------------------------

    @app.get(API + "/explanations")
    def list_explanations(corpus: str, page: int = 0):
        if page < 0:
            raise InvalidInput("page must be >= 0")
        sets = artifacts.explanation_sets_for_corpus(project, corpus)
        if not sets:
            raise NotFoundError(f"no explanation set for corpus {corpus!r}")
        records, manifest = artifacts.load_explanation_records(project, sets[0])
        posts = {p.id: p for p in artifacts.load_corpus(project, corpus).posts}
        start = page * PAGE_SIZE
        items = []
        for rec in records[start : start + PAGE_SIZE]:
            post = posts.get(rec["post_id"])
            items.append({**rec, "text": post.text() if post else ""})
        return {"corpus": corpus, "set": sets[0], "page": page, "page_size": PAGE_SIZE,
                "total": len(records), "items": items, "policy": manifest.get("policy", {})}

    # -- themes ------------------------------------------------------------

    @app.get(API + "/themes")
    def list_themes():
        return {"themes": [_theme_doc(artifacts.load_theme(project, t)) for t in project.list_entries("themes")]}

    @app.post(API + "/themes", status_code=201)
    def create_theme(body: dict):
        with write_lock:
            theme = new_theme(str(body.get("name", "")), notes=str(body.get("notes", "")))
            artifacts.save_theme(project, theme)
        return _theme_doc(theme)

    @app.get(API + "/themes/{theme_id}")
    def get_theme(theme_id: str):
        return _theme_doc(artifacts.load_theme(project, theme_id))

    @app.patch(API + "/themes/{theme_id}")
    def patch_theme(theme_id: str, body: dict):
        from dataclasses import replace

        with write_lock:
            theme = artifacts.load_theme(project, theme_id)
            if "name" in body:
                if not str(body["name"]).strip():
                    raise InvalidInput("theme name must be non-empty")
                theme = replace(theme, name=str(body["name"]).strip())
            if "notes" in body:
                theme = replace(theme, notes=str(body["notes"]))
            artifacts.save_theme(project, theme)
        return _theme_doc(theme)

    @app.delete(API + "/themes/{theme_id}")
    def delete_theme(theme_id: str):
        with write_lock:
            artifacts.load_theme(project, theme_id)  # 404 before delete
            project.delete_entry("themes", theme_id)
        return {"deleted": theme_id}

    @app.post(API + "/themes/{theme_id}/members")
    def add_theme_members(theme_id: str, body: dict):
        phrases = body.get("phrases")
        if phrases is None:
            phrase = body.get("phrase")
            phrases = [phrase] if phrase else []
        if not phrases or not all(isinstance(p, str) and p.strip() for p in phrases):
            raise InvalidInput("provide a non-empty phrase or list of phrases")
        with write_lock:
            theme = add_members(artifacts.load_theme(project, theme_id), [p.strip() for p in phrases])
            artifacts.save_theme(project, theme)
        return _theme_doc(theme)

    # -- search + review ----------------------------------------------------

    @app.post(API + "/search")
    def search(body: dict):
        theme_id = body.get("theme_id", "")
        corpus = body.get("corpus", "")
        n = int(body.get("n", DEFAULT_REVIEW_WINDOW))
        theme = artifacts.find_theme(project, theme_id)
        index = artifacts.index_for_corpus(project, corpus)
        embedder = embedder_for_index(index)
        from .themes import theme_query_vector

        query = theme_query_vector(embedder, theme)
        matches = top_matches(index, query, n)
        return {
            "theme_id": theme.theme_id, "corpus": corpus, "n": n,
            "matches": [{"rank": m.rank, "post_id": m.post_id, "phrase": m.phrase, "cosine": m.cosine}
                        for m in matches],
        }

    @app.post(API + "/reviews", status_code=201)
    def post_review(body: dict):
        required = ("theme_id", "corpus", "post_id", "phrase", "rank", "verdict")
        missing = [k for k in required if k not in body]
        if missing:
            raise InvalidInput(f"missing review fields: {missing}")
        with write_lock:
            if body.get("amend"):
                rec = review_log.amend_review(
                    body["theme_id"], body["corpus"], body["post_id"], body["phrase"],
                    verdict=body["verdict"], reviewer=str(body.get("reviewer", "")),
                )
            else:
                rec = review_log.record_review(
                    body["theme_id"], body["corpus"], body["post_id"], body["phrase"],
                    rank=int(body["rank"]), verdict=body["verdict"], reviewer=str(body.get("reviewer", "")),
                )
        return {"action": rec.action, "theme_id": rec.theme_id, "corpus": rec.corpus,
                "post_id": rec.post_id, "phrase": rec.phrase, "rank": rec.rank,
                "verdict": rec.verdict, "reviewer": rec.reviewer, "reviewed_at": rec.reviewed_at}

    @app.get(API + "/themes/{theme_id}/counts")
    def get_counts(theme_id: str, corpus: str, window: int = DEFAULT_REVIEW_WINDOW):
        theme = artifacts.find_theme(project, theme_id)
        counts = review_log.theme_counts(theme.theme_id, corpus, window=window)
        return {"theme_id": theme.theme_id, "corpus": corpus, "window": counts.window,
                "k": counts.k, "n": counts.n, "proportion": counts.proportion, "partial": counts.partial}

    @app.get(API + "/compare")
    def get_compare(theme: str, corpus_a: str, corpus_b: str, window: int = DEFAULT_REVIEW_WINDOW,
                    alpha: float = 0.01):
        t = artifacts.find_theme(project, theme)
        counts_a = review_log.theme_counts(t.theme_id, corpus_a, window=window)
        counts_b = review_log.theme_counts(t.theme_id, corpus_b, window=window)
        result = compare_theme(t.theme_id, counts_a, counts_b)
        return {
            **result.as_dict(),
            "theme_name": t.name, "corpus_a": corpus_a, "corpus_b": corpus_b, "window": window,
            "partial": counts_a.partial or counts_b.partial,
            "significant": result.significant(alpha), "alpha": alpha,
        }

    # -- rendered posts ------------------------------------------------------

    @app.get(API + "/posts/{post_id}/rendered")
    def rendered_post(post_id: str, explanations: str = "", format: str = "html"):
        set_names = [explanations] if explanations else project.list_entries("explanations")
        for name in set_names:
            records, manifest = artifacts.load_explanation_records(project, name)
            rec = next((r for r in records if r["post_id"] == post_id), None)
            if rec is None:
                continue
            corpus = artifacts.load_corpus(project, manifest["corpus"])
            post = corpus.get(post_id)
            if post is None:
                raise IntegrityError(f"explanation set {name!r} references missing post {post_id!r}")
            delimiters = manifest.get("policy", {}).get("delimiters")
            kwargs = {"delimiters": delimiters} if delimiters else {}
            exp = explanation_from_record(rec, post.text(), **kwargs)
            return {"post_id": post_id, "format": format, "set": name,
                    "text": post.text(), "rendered": render_highlights(post.text(), exp, format=format)}
        raise NotFoundError(f"no explanation found for post {post_id!r}")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(project: Project, bind: str = "127.0.0.1:8787", ui_dir: str | Path | None = None,
          token: str | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    host, _, port = bind.partition(":")
    app = create_app(project, ui_dir=ui_dir, token=token)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="warning")
