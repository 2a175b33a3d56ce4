"""Pointer tokenization of op-seqs.

Arguments that appear in the question become pointers to word positions;
everything else is drawn from a fixed class inventory. Turning tokens back
into text copies question words verbatim, which is why case differences are
lossy and get flagged instead of being silently changed.

Run with ``python demos/02_pointer_tokens.py``.
"""

# %%
from ath.opseq import default_registry, parse_opseq, serialize_opseq
from ath.tokens import build_inventory, format_tokens, question_words, round_trip, tokenize

registry = default_registry(("color",))
question = question_words("What is to the left of the red cup?")
gold = parse_opseq(["select: cup", "filter color: red", "relate: _,to the left of,s", "query: name"], registry)
inventory = build_inventory(registry, [(gold, question)])
print("inventory size:", inventory.size)

# %%
tokens = tokenize(gold, question, inventory, registry)
print(format_tokens(tokens, inventory))

# %% [markdown]
# Round trip on a clean question reproduces the op-seq exactly (the
# dependency lists are not part of the token stream).

# %%
rt = round_trip(gold, question, inventory, registry)
print("identical:", rt.identical)
print(serialize_opseq(rt.result, registry))

# %% [markdown]
# When the question capitalizes the word, the copied argument changes case.

# %%
shouted = question_words("What is to the left of the red Cup?")
rt = round_trip(gold, shouted, inventory, registry)
print("identical:", rt.identical, "flagged lossy:", rt.predicted_lossy)
print(serialize_opseq(rt.result, registry))
