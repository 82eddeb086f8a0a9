"""Decode bytecode, split it into basic blocks and look at the first one.

Run: python demos/01_disassemble.py
"""

from erasable.isa import decode, disassemble, first_block, split_blocks
from erasable.fixtures import reference_contracts
from erasable.symstack import simulate_depth

# A dispatcher-like prologue: store the free memory pointer, then branch.
code = bytes.fromhex("6080604052348015600f57600080fd5b5000")
print(disassemble(code))

blocks = split_blocks(decode(code))
print(f"\n{len(blocks)} basic blocks")
for b in blocks:
    print(f"  0x{b.start_offset:04x}: {' '.join(b.mnemonics)}")

# Depth simulation on the entry block; the stack starts empty.
print("\nentry block depth:", simulate_depth(first_block(code)))

# Opcodes unknown to the selected fork decode as unknown and end the block.
print("\nPUSH0 under istanbul:", decode(b"\x5f")[0].mnemonic)
print("PUSH0 under shanghai:", decode(b"\x5f", fork="shanghai")[0].mnemonic)

# Compiled contracts ship with the package as a clean reference set.
for ref in reference_contracts()[:3]:
    blk = first_block(ref["code"])
    print(f"\n{ref['name']}: {len(ref['code'])} bytes, entry block {len(blk)} instructions")
