/**
 * Text normalization ahead of embedding: lowercase, strip punctuation,
 * then a rule-based suffix lemmatizer (plural and inflection stripping,
 * not a dictionary lemmatizer).
 */

export function tokenize(raw: string): string[] {
  return raw
    .toLowerCase()
    .replace(/[^a-z0-9\s]/g, ' ')
    .split(/\s+/)
    .filter(t => t.length > 0)
}

export function lemmatize(token: string): string {
  if (token.length <= 3) return token
  if (token.endsWith('ies')) return token.slice(0, -3) + 'y'
  if (token.endsWith('sses')) return token.slice(0, -2)
  if (token.endsWith('ing') && token.length > 5) return token.slice(0, -3)
  if (token.endsWith('ed') && token.length > 4) return token.slice(0, -2)
  if (token.endsWith('ss')) return token
  if (token.endsWith('s') && !token.endsWith('us')) return token.slice(0, -1)
  return token
}

export function preprocess(raw: string): string[] {
  return tokenize(raw).map(lemmatize)
}

/** Class names arrive as "001.Black_footed_Albatross" or plain strings. */
export function classNameTokens(name: string): string[] {
  return tokenize(name.replace(/^\d+\./, '').replace(/[_-]/g, ' '))
}
