"""Prompt texts that fix the output formats the parsers and rewards rely on.

These strings are load-bearing contracts: the parsers in :mod:`verikit.parsers`
accept exactly the shapes the examples below demand, so edits here must be
mirrored there.
"""

from __future__ import annotations

DETECTION_SYSTEM_PROMPT = (
    "You are an expert video analyst.\n"
    "Please think about the question as if you were a human pondering deeply. "
    "It’s encouraged to include self-reflection or verification in the "
    "reasoning process. Then, give a final verdict within <answer> </answer> tags."
)

DETECTION_USER_PROMPT = "Is this video real or fake?"

PERCEPTION_SYSTEM_PROMPT = (
    "You are an expert video analyst. Based on this video, provide the answer directly."
)

GROUNDING_USER_PROMPT = """\
Given the query "{description}", when and where does the described content occur in the video? please firstly give the start and end time, spatial bounding box corresponding to each integer second.

Please provide only the time span in seconds and bounding boxes as JSON, ONLY up to 16 seconds.
You MUST output one bounding box for every integer second within the given time span (inclusive).
Example:
{{"time": [8.125, 13.483], "boxes": {{"9": [317, 422, 582, 997], "10": [332, 175, 442, 369], "11": [340, 180, 450, 370]}}}}
Note: Each key in "boxes" must be an integer second within the span, and its value must be a 4-number bounding box [x1, y1, x2, y2]."""

TRACKING_USER_PROMPT = """\
Given the bounding box "{initial_box}" of the target object in the first frame, track this object in each frame and output its bounding box once per second.ONLY up to 16 seconds.
Example:
{{"boxes": {{"1": [405, 230, 654, 463], "2": [435, 223, 678, 446], ..., "16": [415, 203, 691, 487]}}}}
Note: Each key in "boxes" must correspond to a second (1, 2, 3, ..., 16) and contain a 4-number bounding box [x1, y1, x2, y2]."""

COUNTING_USER_PROMPT = (
    "Count the number of circles, squares, and triangles that appear in this "
    "video. Be aware that the shapes can appear in any color and at any angle "
    "of rotation. They may be present on one or multiple frames, and any given "
    "frame can contain more than one shape. Provide the answer as three "
    "comma-separated numbers in the format: circles,squares,triangles. For "
    'example, if you see 3 circles, 1 square, and 4 triangles, your answer '
    'should be "3,1,4".'
)

ARTIFACT_GROUNDING_USER_PROMPT = """\
Find the visual artifacts at "{time}" in the video.
Provide the bounding boxes where the artifact occurred, in [x_min, y_min, x_max, y_max] format. If there are multiple locations, you should provide all the bounding boxes.
Example:
{{"boxes": [[487, 324, 573, 398], [670, 533, 734, 769]]}}."""

# The five reasoning-behavior dimensions scored by the pairwise judge.
JUDGE_DIMENSIONS: dict[str, str] = {
    "Component Granularity": (
        "This dimension evaluates whether the assistant describes the scene as "
        "a whole or deconstructs it into specific objects and their "
        "fine-grained components (e.g., specific limbs, lens edges, or "
        "individual textures)."
    ),
    "Spatiotemporal Continuity": (
        "This dimension evaluates the assistant's ability to anchor its "
        "observations to precise temporal markers (timestamps) and spatial "
        'locations. It looks for how well the analysis "tracks" changes over '
        "a specific timeline."
    ),
    "Physics Depth": (
        "This dimension evaluates the extent to which the assistant uses "
        "principles of physics (optics, mechanics, biology) to explain "
        'anomalies, rather than simply stating that something "looks wrong".'
    ),
    "Forensic Objectivity": (
        "This dimension evaluates the shift from subjective, impression-based "
        'language (e.g., "uncanny", "beautiful") to objective, evidence-based '
        'descriptions (e.g., "static texture overlay", "non-uniform '
        'deformation").'
    ),
    "Relational Logic": (
        "This dimension assesses the analysis of how different elements in "
        "the report interact with one another (e.g., the relationship between "
        "a moving object and its shadow, or the reaction of a surface to a "
        "force)."
    ),
}

JUDGE_PROMPT_TEMPLATE = """\
You are a helpful assistant proficient in analyzing vision reasoning problems.
## Instruction:
You will be presented with two analytical reports (Assistant A and Assistant B) that describe observations from a video. Your task is to perform a side-by-side comparison and determine which assistant provides higher-quality reasoning based ONLY on the specific dimension provided below.
The evaluation must be conducted strictly based on the textual evidence provided. Do not assume any external video information. Your goal is to identify which assistant demonstrates more professional, precise, and logically structured analysis within the specified scope.

## Evaluation Dimension: {dimension_name}
Description: {dimension_description}

## Rules for Evaluation:
- Strictly Dimension-Focused: Ignore other aspects of the reports. Only judge based on the provided dimension.
- Content over Conclusion: Do not favor an assistant based on its final verdict. Focus on the depth and quality of the reasoning path.
- Neutrality: Be unbiased toward length or tone. Prioritize the density of meaningful, analytical information.

## Desired Output Format:
Present your verdict in a JSON format, with key "analysis" for a short reason of your judgment and key "judgment" to indicate your decision: use "[[A]]" if assistant A prevails, "[[B]]" if assistant B does, and "[[C]]" for a tie.

## Input Data:
[The Start of Assistant A’s Analysis]
{output_a}
[The End of Assistant A’s Analysis]
[The Start of Assistant B’s Analysis]
{output_b}
[The End of Assistant B’s Analysis]"""

TASK_PROMPTS: dict[str, str] = {
    "detection": DETECTION_USER_PROMPT,
    "grounding": GROUNDING_USER_PROMPT,
    "tracking": TRACKING_USER_PROMPT,
    "counting": COUNTING_USER_PROMPT,
    "artifact_grounding": ARTIFACT_GROUNDING_USER_PROMPT,
}

SYSTEM_PROMPTS: dict[str, str] = {
    "detection": DETECTION_SYSTEM_PROMPT,
    "grounding": PERCEPTION_SYSTEM_PROMPT,
    "tracking": PERCEPTION_SYSTEM_PROMPT,
    "counting": PERCEPTION_SYSTEM_PROMPT,
    "artifact_grounding": PERCEPTION_SYSTEM_PROMPT,
}
