"""Character vocabulary for the toy autoregressive generator."""

PAD_ID = 0
EOS_ID = 1
DEFAULT_ALPHABET = " abcdefghijklmnopqrstuvwxyz."


class Vocab:
    """Maps characters to token ids; ids 0 and 1 are reserved for PAD/EOS."""

    def __init__(self, alphabet=DEFAULT_ALPHABET):
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet has duplicate characters")
        self.alphabet = alphabet
        self._index = {ch: i + 2 for i, ch in enumerate(alphabet)}

    def __len__(self):
        return len(self.alphabet) + 2

    def __contains__(self, ch):
        return ch in self._index

    def encode(self, text):
        try:
            return [self._index[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in alphabet") from None

    def decode(self, ids):
        return "".join(self.alphabet[i - 2] for i in ids if i >= 2)
