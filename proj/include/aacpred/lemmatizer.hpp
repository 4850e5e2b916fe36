#ifndef AACPRED_LEMMATIZER_HPP
#define AACPRED_LEMMATIZER_HPP

#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aacpred/error.hpp"
#include "aacpred/text.hpp"

namespace aacpred {

class Lemmatizer {
 public:
  virtual ~Lemmatizer() = default;
  /// `word` is already lowercased.
  virtual std::string lemma(std::string_view word) const = 0;
};

/// Leaves every word unchanged.
class IdentityLemmatizer final : public Lemmatizer {
 public:
  std::string lemma(std::string_view word) const override { return std::string(word); }
};

/// Exact lookup table; unknown words map to themselves.
class MapLemmatizer : public Lemmatizer {
 public:
  MapLemmatizer() = default;
  explicit MapLemmatizer(std::unordered_map<std::string, std::string> table) : table_(std::move(table)) {}

  // Tab-separated "form<TAB>lemma" lines; '#' starts a comment.
  static MapLemmatizer from_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::malformed_input, "cannot open lemma table " + path.string());
    std::unordered_map<std::string, std::string> table;
    std::string line;
    while (std::getline(in, line)) {
      auto t = text::trim_view(line);
      if (t.empty() || t.front() == '#') continue;
      auto tab = t.find('\t');
      if (tab == std::string_view::npos) continue;
      table.emplace(text::to_lower(text::trim(t.substr(0, tab))), text::to_lower(text::trim(t.substr(tab + 1))));
    }
    return MapLemmatizer(std::move(table));
  }

  void add(std::string form, std::string lemma) { table_.emplace(std::move(form), std::move(lemma)); }

  std::string lemma(std::string_view word) const override {
    auto it = table_.find(std::string(word));
    return it == table_.end() ? std::string(word) : it->second;
  }

  std::size_t size() const { return table_.size(); }

 protected:
  std::unordered_map<std::string, std::string> table_;
};

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suf) {
  return s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf;
}

// Stem adjustments before front vowels: ficar -> fiqu-e, chegar -> chegu-e,
// começar -> comec-e.
inline std::string soft_stem_ar(const std::string& stem) {
  if (ends_with(stem, "c")) return stem.substr(0, stem.size() - 1) + "qu";
  if (ends_with(stem, "g")) return stem + "u";
  if (ends_with(stem, "ç")) return stem.substr(0, stem.size() - 2) + "c";
  return stem;
}

inline std::vector<std::string> regular_forms(const std::string& inf) {
  std::vector<std::string> forms;
  if (inf.size() < 3) return forms;
  std::string stem = inf.substr(0, inf.size() - 2);
  std::string theme = inf.substr(inf.size() - 2, 1);
  auto add = [&](std::initializer_list<const char*> sufs, const std::string& base) {
    for (auto* s : sufs) forms.push_back(base + s);
  };
  // Future and conditional hang off the infinitive for every class.
  add({"ei", "ás", "á", "emos", "ão", "ia", "ias", "íamos", "iam"}, inf);
  if (theme == "a") {
    add({"o", "as", "a", "amos", "am", "ou", "aste", "aram", "ava", "avas", "ávamos", "avam", "ando", "ado", "ada",
         "ados", "adas", "asse", "assem", "ar", "arem"},
        stem);
    add({"ei", "e", "es", "em", "emos"}, soft_stem_ar(stem));
  } else if (theme == "e") {
    std::string soft = stem;
    if (ends_with(stem, "c")) soft = stem.substr(0, stem.size() - 1) + "ç";
    if (ends_with(stem, "g")) soft = stem.substr(0, stem.size() - 1) + "j";
    add({"es", "e", "emos", "em", "i", "eu", "este", "eram", "ia", "ias", "íamos", "iam", "endo", "ido", "ida",
         "idos", "idas", "esse", "essem", "erem"},
        stem);
    add({"o", "a", "as", "am"}, soft);
  } else if (theme == "i") {
    std::string soft = stem;
    if (ends_with(stem, "g")) soft = stem.substr(0, stem.size() - 1) + "j";
    add({"es", "e", "imos", "em", "i", "iu", "iste", "iram", "ia", "ias", "íamos", "iam", "indo", "ido", "ida",
         "idos", "idas", "isse", "issem", "irem"},
        stem);
    add({"o", "a", "as", "am"}, soft);
  }
  return forms;
}

// Common verbs in everyday AAC sentences; the list drives regular paradigm
// generation. Irregular forms below take precedence.
inline constexpr std::array kRegularVerbs = {
    "abraçar", "abrir", "acabar", "acender", "achar", "acordar", "ajudar", "almoçar", "amar", "andar",
    "apagar", "aprender", "arrumar", "assistir", "atender", "bater", "beber", "beijar", "brigar", "brincar",
    "buscar", "cantar", "chamar", "chegar", "chorar", "chover", "chutar", "colocar", "começar", "comer",
    "comprar", "conhecer", "consertar", "contar", "conversar", "correr", "cortar", "costurar", "cozinhar",
    "cuidar", "curtir", "dançar", "decidir", "deitar", "deixar", "desenhar", "desligar", "descansar", "desculpar",
    "dividir", "doer", "empurrar", "encontrar", "ensinar", "entender", "entrar", "enviar", "escolher",
    "escovar", "escrever", "escutar", "esperar", "esquecer", "estudar", "existir", "explicar", "falar",
    "faltar", "fechar", "ficar", "gostar", "gritar", "guardar", "jantar", "jogar", "lavar", "lembrar",
    "levantar", "levar", "ligar", "limpar", "machucar", "mandar", "molhar", "morar", "mostrar", "mudar",
    "nadar", "olhar", "organizar", "pagar", "parar", "partir", "passar", "passear", "pegar", "pensar",
    "pentear", "perguntar", "pintar", "precisar", "preparar", "procurar", "puxar", "quebrar", "receber",
    "responder", "sacar", "secar", "sentar", "servir", "sonhar", "sorrir", "subir", "tentar", "terminar",
    "tirar", "tocar", "tomar", "tossir", "trabalhar", "trocar", "usar", "vender", "viajar", "visitar",
    "viver", "voltar", "votar", "xingar", "cair", "esconder", "mexer", "morder", "nascer", "crescer",
    "agradecer", "aparecer", "oferecer", "parecer", "permitir", "cumprir", "discutir", "desistir", "unir",
};

// Irregular forms (form, lemma). Ambiguous "fui/foi/foram" resolve to "ir",
// the reading that dominates in everyday request sentences.
inline const std::vector<std::pair<std::string, std::string>>& irregular_forms() {
  static const std::vector<std::pair<std::string, std::string>> forms = [] {
    std::vector<std::pair<std::string, std::string>> f;
    auto add = [&](const char* lemma, std::initializer_list<const char*> list) {
      for (auto* s : list) f.emplace_back(s, lemma);
    };
    add("ir", {"vou", "vai", "vais", "vamos", "vão", "fui", "foi", "fomos", "foram", "foste", "ia", "iam",
               "íamos", "indo", "ido", "irei", "irá", "iremos", "irão", "iria", "vá", "vão"});
    add("ser", {"sou", "é", "és", "somos", "são", "era", "eras", "éramos", "eram", "fora", "serei", "será",
                "seremos", "serão", "seria", "seja", "sejam", "sejamos", "sendo", "sido", "fosse", "fossem"});
    add("estar", {"estou", "está", "estás", "estamos", "estão", "estive", "esteve", "estivemos", "estiveram",
                  "estava", "estavas", "estávamos", "estavam", "esteja", "estejam", "estando", "estado",
                  "estivesse", "tô", "tá"});
    add("ter", {"tenho", "tem", "tens", "temos", "têm", "tive", "teve", "tivemos", "tiveram", "tinha", "tinhas",
                "tínhamos", "tinham", "tenha", "tenham", "tendo", "tido", "terei", "terá", "teria", "tivesse"});
    add("querer", {"quero", "quer", "queres", "queremos", "querem", "quis", "quisemos", "quiseram", "queria",
                   "queriam", "queríamos", "queira", "queiram", "querendo", "querido", "quisesse"});
    add("fazer", {"faço", "faz", "fazes", "fazemos", "fazem", "fiz", "fez", "fizemos", "fizeram", "fazia",
                  "faziam", "faça", "façam", "fazendo", "feito", "feita", "farei", "fará", "faremos", "farão",
                  "faria", "fizesse"});
    add("poder", {"posso", "pode", "podes", "podemos", "podem", "pude", "pôde", "pudemos", "puderam", "podia",
                  "podiam", "possa", "possam", "podendo", "podido", "poderia", "pudesse"});
    add("dizer", {"digo", "diz", "dizes", "dizemos", "dizem", "disse", "dissemos", "disseram", "dizia", "diga",
                  "digam", "dizendo", "dito", "direi", "dirá", "diria"});
    add("ver", {"vejo", "vê", "vês", "vemos", "veem", "vi", "viu", "vimos", "viram", "via", "viam", "veja",
                "vejam", "vendo", "visto", "verei", "verá", "veria", "visse"});
    add("vir", {"venho", "vem", "vens", "vimos", "vêm", "vim", "veio", "viemos", "vieram", "vinha", "vinham",
                "venha", "venham", "vindo", "virei", "virá", "viria", "viesse"});
    add("dar", {"dou", "dá", "dás", "damos", "dão", "dei", "deu", "demos", "deram", "dava", "davam", "dê",
                "deem", "dando", "dado", "darei", "dará", "daria", "desse"});
    add("saber", {"sei", "sabe", "sabes", "sabemos", "sabem", "soube", "soubemos", "souberam", "sabia",
                  "sabiam", "saiba", "saibam", "sabendo", "sabido", "saberia", "soubesse"});
    add("pôr", {"ponho", "põe", "pões", "pomos", "põem", "pus", "pôs", "pusemos", "puseram", "punha",
                "punham", "ponha", "ponham", "pondo", "posto", "pusesse"});
    add("trazer", {"trago", "traz", "trazes", "trazemos", "trazem", "trouxe", "trouxemos", "trouxeram",
                   "trazia", "traga", "tragam", "trazendo", "trazido", "trarei", "trará"});
    add("ouvir", {"ouço", "ouve", "ouves", "ouvimos", "ouvem", "ouvi", "ouviu", "ouviram", "ouvia", "ouça",
                  "ouvindo", "ouvido"});
    add("pedir", {"peço", "pede", "pedes", "pedimos", "pedem", "pedi", "pediu", "pediram", "pedia", "peça",
                  "pedindo", "pedido"});
    add("dormir", {"durmo", "dorme", "dormes", "dormimos", "dormem", "dormi", "dormiu", "dormiram", "dormia",
                   "durma", "dormindo", "dormido"});
    add("sair", {"saio", "sai", "sais", "saímos", "saem", "saí", "saiu", "saíram", "saía", "saia", "saiam",
                 "saindo", "saído"});
    add("ler", {"leio", "lê", "lês", "lemos", "leem", "li", "leu", "leram", "lia", "liam", "leia", "leiam",
                "lendo", "lido"});
    add("perder", {"perco", "perde", "perdes", "perdemos", "perdem", "perdi", "perdeu", "perderam", "perdia",
                   "perca", "perdendo", "perdido"});
    add("haver", {"há", "houve", "havia", "haja", "havendo", "havido"});
    add("sentir", {"sinto", "sente", "sentes", "sentimos", "sentem", "senti", "sentiu", "sentiram", "sentia",
                   "sinta", "sentindo", "sentido"});
    add("vestir", {"visto", "veste", "vestes", "vestimos", "vestem", "vesti", "vestiu", "vestiram", "vestia",
                   "vista", "vestindo", "vestido"});
    add("conseguir", {"consigo", "consegue", "consegues", "conseguimos", "conseguem", "consegui", "conseguiu",
                      "conseguiram", "conseguia", "consiga", "conseguindo", "conseguido"});
    add("preferir", {"prefiro", "prefere", "preferes", "preferimos", "preferem", "preferi", "preferiu",
                     "preferia", "prefira"});
    add("subir", {"sobe", "sobes", "sobem"});
    add("cair", {"caio", "cai", "caímos", "caem", "caí", "caiu", "caíram", "caía", "caindo", "caído"});
    add("sorrir", {"sorrio", "sorri", "sorrimos", "sorriem", "sorriu", "sorrindo"});
    add("doer", {"dói", "doem", "doeu", "doía"});
    add("chover", {"chove", "choveu", "chovia", "chovendo"});
    add("tossir", {"tusso", "tosse", "tossiu"});
    return f;
  }();
  return forms;
}

inline std::string strip_plural(std::string_view w) {
  std::string s(w);
  if (ends_with(s, "ões") || ends_with(s, "ães")) return s.substr(0, s.size() - 4) + "ão";
  if (ends_with(s, "ns")) return s.substr(0, s.size() - 2) + "m";
  if (ends_with(s, "res") || ends_with(s, "zes") || ends_with(s, "ses")) return s.substr(0, s.size() - 2);
  if (ends_with(s, "is") && s.size() > 3) return s.substr(0, s.size() - 2) + "l";
  if (ends_with(s, "s") && s.size() > 2) return s.substr(0, s.size() - 1);
  return s;
}

}  // namespace detail

// Dictionary and paradigm based Portuguese lemmatizer.
//
// Lookup order: a word that is itself a known vocabulary lemma stays as is
// ("casa" is a noun, not a form of "casar"); then the irregular table; then
// forms generated from regular -ar/-er/-ir paradigms; then plural folding onto
// a known lemma. Anything else is returned unchanged.
class PortugueseLemmatizer final : public Lemmatizer {
 public:
  explicit PortugueseLemmatizer(std::set<std::string> known_lemmas = {}) : known_(std::move(known_lemmas)) {
    for (const auto& [form, lemma] : detail::irregular_forms()) forms_.emplace(form, lemma);
    for (const char* verb : detail::kRegularVerbs) {
      std::string inf(verb);
      forms_.emplace(inf, inf);
      for (auto& f : detail::regular_forms(inf)) forms_.emplace(std::move(f), inf);
    }
  }

  void add_form(std::string form, std::string lemma) { forms_.insert_or_assign(std::move(form), std::move(lemma)); }

  std::string lemma(std::string_view word) const override {
    std::string w(word);
    if (known_.count(w)) return w;
    if (auto it = forms_.find(w); it != forms_.end()) return it->second;
    if (!known_.empty()) {
      auto singular = detail::strip_plural(w);
      if (singular != w && known_.count(singular)) return singular;
    }
    return w;
  }

 private:
  std::set<std::string> known_;
  std::unordered_map<std::string, std::string> forms_;
};

}  // namespace aacpred

#endif  // AACPRED_LEMMATIZER_HPP
