// One-keystroke tag assignment: scheme index -> key. Digits first, then
// letters, covering 36 tags with a single key each (well inside the
// two-keystroke budget). Tags beyond 36 stay click-only.

const KEYS = "1234567890abcdefghijklmnopqrstuvwxyz";

export function keyForTag(index: number): string | null {
  if (index < 0 || index >= KEYS.length) {
    return null;
  }
  return KEYS[index];
}

export function tagIndexForKey(key: string): number | null {
  const idx = KEYS.indexOf(key.toLowerCase());
  return idx === -1 ? null : idx;
}

export function keyboardIsTotal(numTags: number): boolean {
  for (let i = 0; i < numTags; i++) {
    const key = keyForTag(i);
    if (key === null || key.length > 2) {
      return false;
    }
  }
  return true;
}
