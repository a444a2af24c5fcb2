/** The six structural classes in their canonical order.
 *
 * The index here is the single source of truth for the keyboard mapping:
 * key "1" labels the first class, key "6" the last.
 */
export const STRUCTURAL_CLASSES = [
  "Structured",
  "WeaklyStructured",
  "Localized",
  "Fragmented",
  "Unstructured",
  "Negative",
] as const;

export type StructuralClass = (typeof STRUCTURAL_CLASSES)[number];

/** Maps keyboard digits "1".."6" to their class; null for anything else. */
export function classForKey(key: string): StructuralClass | null {
  const n = Number.parseInt(key, 10);
  if (!Number.isInteger(n) || n < 1 || n > STRUCTURAL_CLASSES.length) {
    return null;
  }
  return STRUCTURAL_CLASSES[n - 1];
}
