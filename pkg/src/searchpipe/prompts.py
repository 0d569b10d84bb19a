"""Prompt templates for the three pipeline stages, two variants each.

The template texts are frozen verbatim (golden-file tested); placeholders in
``{braces}`` are substituted at build time. ``{query_image}`` and
``{image_search_result}`` splice in images, ``{website_information}`` splices
in a mixed text/image block, the rest are plain text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .errors import PreconditionError
from .imaging import resize_for_model
from .model import (BriefResult, FullWebsiteContent, ImageAsset,
                    PipelineConfig, QueryRecord, Stage)

__all__ = [
    "PromptSegment", "PromptBundle", "TEMPLATES",
    "build_requery_prompt", "build_rerank_prompt", "build_summarize_prompt",
]


REQUERY_TEXT_TEMPLATE = """\
You are a helpful assistant. I am giving you a question, which cannot be solved without external knowledge.
Assume you have access to a text-only search engine (e.g., google). Please raise a query to the search engine to search for what is useful for you to answer the question correctly. Your query needs to consider the attribute of the query to search engine.
Here are 3 examples:
Question: Did Zheng Xiuwen wear a knee pad in the women's singles tennis final in 2024 Paris Olympics?
Query to the search engine: Images of Zheng Xiuwen in the women's singles tennis final in 2024 Paris Olympics

Question: When will Apple release iPhone16?
Query to the search engine: iPhone 16 release date

Question: Who will sing a French song at the Olympic Games closing ceremony?
Query to the search engine: Singers at the Olympic Games closing ceremony, French song.

Question: {question}.
Query to the search engine (do not involve any explanation):"""

REQUERY_IMAGE_TEMPLATE = """\
You are a helpful assistant. I am giving you a question including an image, which cannot be solved without external knowledge.
Assume you have access to a search engine (e.g., google). Please raise a query to the search engine to search for what is useful for you to answer the question correctly. You need to consider the characteristics of asking questions to search engines when formulating your questions.
You are also provided with the search result of the image in the question. You should leverage the image search result to raise the text query.
Here are 3 examples:
Question: Did Zheng Xiuwen wear a knee pad in the women's singles tennis final in 2024 Paris Olympics?
Query to the search engine: Images of Zheng Xiuwen in the women's singles tennis final in 2024 Paris Olympics

Question: When will Apple release iPhone16?
Query to the search engine: iPhone 16 release date

Question: Who will sing a French song at the Olympic Games closing ceremony?
Query to the search engine: Singers at the Olympic Games closing ceremony, French song
Question: {query_image}{question}. The image search result is: {image_search_result}
Query to the search engine (do not involve any explanation):"""

RERANK_TEXT_TEMPLATE = """\
You are a helpful assistant. I am giving you a question and {k} website information related to the question (including the screenshot, snippet and title). You should now read the screenshots, snippets and titles. Select 1 website that is the most helpful for you to answer the question. Once you select it, the detailed content of them will be provided to help you correctly answer the question. The question is {question}. The website informations is
{website_information}.
You should directly output 1 website's index that can help you most, and enclose the website in angle brackets. The output format should be: <Website Index>.
An example of the output is: <Website 1>.
Your answer:"""

RERANK_IMAGE_TEMPLATE = """\
You are a helpful assistant. I am giving you a question including an image. You are provided with the search result of the image in the question. And you are provided with {k} website information related to the question (including the screenshot, snippet, and title).
You should now read the screenshots, snippets and titles of these websites. Select 1 website that is the most helpful for you to answer the question. Once you select it, the detailed content of them will be provided to help you correctly answer the question. The question is {query_image}{question}.
The image search result is {image_search_result}.
The website information is {website_information}.
You should directly output 1 website's index that can help you most, and enclose the website in angle brackets. The output format should be: <Website Index>.
An example of the output is: <Website 1>.
Your answer:"""

SUMMARIZE_TEXT_TEMPLATE = """\
You are a helpful assistant. I am giving you a question and 1 website information related to the question.
Please follow these guidelines when formulating your answer:
1. If the question contains a false premise or assumption, answer "invalid question".
2. When answering questions about dates, use the yyyy-mm-dd format.
3. Answer the question with as few words as you can.

You should now read the information of the website and answer the question.
The website information is {website_information}.
The question is {question}.
Please directly output the answer without any explanation:"""

SUMMARIZE_IMAGE_TEMPLATE = """\
You are a helpful assistant. I am giving you a question including an image. You are provided with the search result of the image in the question. And you are provided with 1 website information related to the question.
Please follow these guidelines when formulating your answer:
1. If the question contains a false premise or assumption, answer "invalid question".
2. When answering questions about dates, use the yyyy-mm-dd format.
3. Answer the question with as few words as you can.

You should now read the information of the website and answer the question.
The website information is {website_information}.
The image search result is {image_search_result}.
The question is {query_image}{question}.
Please directly output the answer without any explanation:"""

TEMPLATES: dict[str, str] = {
    "requery_text": REQUERY_TEXT_TEMPLATE,
    "requery_image": REQUERY_IMAGE_TEMPLATE,
    "rerank_text": RERANK_TEXT_TEMPLATE,
    "rerank_image": RERANK_IMAGE_TEMPLATE,
    "summarize_text": SUMMARIZE_TEXT_TEMPLATE,
    "summarize_image": SUMMARIZE_IMAGE_TEMPLATE,
}

_PLACEHOLDER = re.compile(
    r"\{(question|query_image|image_search_result|website_information|k)\}")


@dataclass(frozen=True)
class PromptSegment:
    """One piece of a prompt: either text or an inline image, never both."""

    text: str | None = None
    image: ImageAsset | None = None

    def __post_init__(self):
        if (self.text is None) == (self.image is None):
            raise ValueError("segment must carry exactly one of text/image")


@dataclass(frozen=True)
class PromptBundle:
    """An ordered interleaving of text and prepared images for one call."""

    segments: tuple[PromptSegment, ...]
    stage: Stage
    has_query_image: bool

    def text(self) -> str:
        """All text segments concatenated (images contribute nothing)."""
        return "".join(s.text for s in self.segments if s.text is not None)

    def images(self) -> list[ImageAsset]:
        return [s.image for s in self.segments if s.image is not None]


Splice = str | list[PromptSegment]


def _render(template: str, stage: Stage, has_query_image: bool,
            values: dict[str, Splice]) -> PromptBundle:
    """Substitute placeholders; image splices cut the text at that point."""
    segments: list[PromptSegment] = []
    buffer: list[str] = []

    def flush():
        if buffer:
            segments.append(PromptSegment(text="".join(buffer)))
            buffer.clear()

    pos = 0
    for match in _PLACEHOLDER.finditer(template):
        buffer.append(template[pos:match.start()])
        value = values[match.group(1)]
        if isinstance(value, str):
            buffer.append(value)
        else:
            for part in value:
                if part.text is not None:
                    buffer.append(part.text)
                else:
                    flush()
                    segments.append(part)
        pos = match.end()
    buffer.append(template[pos:])
    flush()
    return PromptBundle(segments=tuple(segments), stage=stage,
                        has_query_image=has_query_image)


def _prepared(image: ImageAsset, config: PipelineConfig) -> PromptSegment:
    return PromptSegment(image=resize_for_model(
        image, config.resize_mode, config.model_max_edge))


def _query_values(record: QueryRecord,
                  config: PipelineConfig) -> dict[str, Splice]:
    values: dict[str, Splice] = {"question": record.question}
    if record.query_image is not None:
        if record.image_search_screenshot is None:
            raise PreconditionError(
                f"query {record.id}: image variant requires an image search "
                "screenshot")
        values["query_image"] = [_prepared(record.query_image, config)]
        values["image_search_result"] = [
            _prepared(record.image_search_screenshot, config)]
    return values


def build_requery_prompt(record: QueryRecord,
                         config: PipelineConfig | None = None) -> PromptBundle:
    """Stage-1 prompt: ask the model to reformulate the question into a
    search-engine query, guided by three in-context examples."""
    config = config or PipelineConfig()
    if not record.question.strip():
        raise PreconditionError(f"query {record.id}: empty question")
    values = _query_values(record, config)
    has_image = record.query_image is not None
    template = REQUERY_IMAGE_TEMPLATE if has_image else REQUERY_TEXT_TEMPLATE
    return _render(template, Stage.REQUERY, has_image, values)


def _website_block(brief: BriefResult,
                   config: PipelineConfig) -> list[PromptSegment]:
    header = (f"\nWebsite {brief.rank}:\n"
              f"Title: {brief.title}\n"
              f"Snippet: {brief.snippet}\n"
              f"Screenshot: ")
    return [PromptSegment(text=header),
            _prepared(brief.top_screenshot, config)]


def build_rerank_prompt(record: QueryRecord, briefs: Sequence[BriefResult],
                        config: PipelineConfig | None = None) -> PromptBundle:
    """Stage-2 prompt: all K websites' titles, snippets, and top-section
    screenshots, asking for one bracketed index."""
    config = config or PipelineConfig()
    if not record.question.strip():
        raise PreconditionError(f"query {record.id}: empty question")
    k = config.k_websites
    if len(briefs) != k:
        raise PreconditionError(
            f"query {record.id}: rerank prompt needs exactly {k} brief "
            f"results, got {len(briefs)}")
    values = _query_values(record, config)
    values["k"] = str(k)
    website_info: list[PromptSegment] = []
    for brief in briefs:
        website_info.extend(_website_block(brief, config))
    values["website_information"] = website_info
    has_image = record.query_image is not None
    template = RERANK_IMAGE_TEMPLATE if has_image else RERANK_TEXT_TEMPLATE
    return _render(template, Stage.RERANK, has_image, values)


def build_summarize_prompt(record: QueryRecord, content: FullWebsiteContent,
                           config: PipelineConfig | None = None) -> PromptBundle:
    """Stage-3 prompt: the selected website's retrieved text plus its
    full-page screenshot segments, with the three answer guidelines."""
    config = config or PipelineConfig()
    if not record.question.strip():
        raise PreconditionError(f"query {record.id}: empty question")
    if len(content.fullpage_segments) > config.max_segments:
        raise PreconditionError(
            f"query {record.id}: {len(content.fullpage_segments)} full-page "
            f"segments exceed the maximum of {config.max_segments}")
    values = _query_values(record, config)
    website_info: list[PromptSegment] = [PromptSegment(text=(
        f"\nTitle: {content.title}\n"
        f"Snippet: {content.snippet}\n"
        f"Content: {content.retrieved_text}\n"
        f"Screenshot: "))]
    for segment in content.fullpage_segments:
        website_info.append(_prepared(segment, config))
    values["website_information"] = website_info
    has_image = record.query_image is not None
    template = (SUMMARIZE_IMAGE_TEMPLATE if has_image
                else SUMMARIZE_TEXT_TEMPLATE)
    return _render(template, Stage.SUMMARIZE, has_image, values)
