"""Toolkit for populating the FRA Highway-Rail Grade Crossing Incident form (Form 57) from news text.

Submodules:
    schema      -- typed form model, JSON layouts, format validation
    gateway     -- chat-completion backends (live HTTP + scripted tape)
    kie         -- sampled transcription / grouping pipeline and error counting
    qa          -- question answering over articles, typed answer parsing
    linkage     -- FRA incident CSV ingestion and article-record matching
    evaluation  -- accuracy / coverage scoring against linked ground truth
    service     -- review dashboard HTTP API
    cli         -- command line front end
"""

__version__ = "0.1.0"
